// harness.hpp - train / adapt / evaluate / report command implementations
// shared by the CLI and the test suites.
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fsaf/checkpoint.hpp"
#include "fsaf/config.hpp"
#include "fsaf/env.hpp"
#include "fsaf/meta.hpp"
#include "fsaf/report.hpp"

namespace fsaf::harness {

namespace fs = std::filesystem;

// --- train --------------------------------------------------------------------

struct TrainOutputs {
    std::string log_path;
    std::string best_ckpt_path;
    std::string final_ckpt_path;
    meta::TrainLog log;
    int best_iteration = -1;
};

inline TrainOutputs cmd_train(const ExperimentConfig& config, const std::string& out_dir,
                              const std::string& resume_ckpt = "") {
    fs::create_directories(out_dir);
    {
        std::ofstream cfg_out(fs::path(out_dir) / "effective_config.json");
        cfg_out << config.dump();
    }

    TrainOutputs out;
    out.log_path = (fs::path(out_dir) / "training_log.jsonl").string();
    out.best_ckpt_path = (fs::path(out_dir) / "ckpt_best.json").string();
    out.final_ckpt_path = (fs::path(out_dir) / "ckpt_final.json").string();
    std::string latest_path = (fs::path(out_dir) / "ckpt_latest.json").string();

    meta::Trainer trainer(config.train_settings());
    if (!resume_ckpt.empty()) trainer.restore(load_checkpoint(resume_ckpt).set);

    std::ofstream log_out(out.log_path, resume_ckpt.empty() ? std::ios::trunc : std::ios::app);
    if (!log_out) throw IoError("train: cannot open " + out.log_path);

    double best_return = -std::numeric_limits<double>::infinity();
    auto save = [&](const bdqn::ParticleSet& set, const std::string& path) {
        save_checkpoint({set, config.hash(), config.seed}, path);
    };

    trainer.set_iteration_hook([&](const bdqn::ParticleSet& set, const meta::IterationRecord& rec) {
        json j;
        j["iteration"] = rec.iteration;
        j["avg_return"] = rec.avg_return;
        j["train_metric"] = rec.train_metric;
        j["meta_loss"] = rec.meta_loss;
        json tr = json::object();
        for (const auto& [task, ret] : rec.task_returns) tr[task] = ret;
        j["task_returns"] = std::move(tr);
        log_out << j.dump() << "\n";
        log_out.flush();

        if (rec.avg_return >= best_return) {  // ties go to the later iteration
            best_return = rec.avg_return;
            out.best_iteration = rec.iteration;
            save(set, out.best_ckpt_path);
        }
        if ((rec.iteration + 1) % config.checkpoint_interval == 0) save(set, latest_path);
    });

    trainer.run();
    save(trainer.particles(), out.final_ckpt_path);
    if (out.best_iteration < 0) {
        save(trainer.particles(), out.best_ckpt_path);
        out.best_iteration = static_cast<int>(trainer.particles().iteration) - 1;
    }
    out.log = trainer.log();
    return out;
}

// --- adapt --------------------------------------------------------------------

/// Builds replay buffers by rolling episodes on the shot functions, then runs
/// K SVGD adaptation steps. K = 0 returns the checkpoint unchanged.
inline Checkpoint adapt_checkpoint(const Checkpoint& ckpt, const std::vector<env::TaskSpec>& shots,
                                   int adapt_steps, const ExperimentConfig& config,
                                   int episodes_per_shot = 0) {
    if (adapt_steps < 0) throw ValueError("adapt: K must be >= 0");
    if (shots.empty()) throw ValueError("adapt: no shot functions given");
    if (episodes_per_shot <= 0) episodes_per_shot = config.episodes_per_task;

    Checkpoint adapted = ckpt;
    if (adapt_steps == 0) return adapted;

    bdqn::ReplayBuffer q_buf(config.buffer_capacity, bdqn::BufferKind::Q);
    bdqn::ReplayBuffer demo_buf(config.buffer_capacity, bdqn::BufferKind::Demo);

    for (std::size_t si = 0; si < shots.size(); ++si) {
        int extra = 0;
        for (int e = 0; e < episodes_per_shot + extra; ++e) {
            Rng fn_rng(derive_seed(config.seed, {hash_tag("shot_fn"), si, static_cast<std::uint64_t>(e)}));
            env::BlackBox box = env::make_blackbox(shots[si], fn_rng, /*force_discrete=*/true);
            gp::KernelSpec surrogate = box.generating_kernel
                                           ? *box.generating_kernel
                                           : gp::fit_lengthscale(
                                                 gp::Dataset{box.grid, box.grid_values, config.noise_variance},
                                                 gp::KernelKind::Rbf);

            env::EpisodeOptions opts;
            opts.record_transitions = true;
            {
                env::FsafPolicy policy(adapted.set.arch, adapted.set.particle_values());
                opts.action_mode = qnet::ActionMode::Boltzmann;
                opts.temperature = config.temperature;
                Rng ep(derive_seed(config.seed, {hash_tag("shot_ep"), si, static_cast<std::uint64_t>(e)}));
                auto res = env::run_episode(policy, box, config.budget, surrogate, ep, opts);
                for (auto& t : res.transitions) q_buf.push(std::move(t));
            }
            {
                env::EiPolicy ei;
                opts.action_mode = qnet::ActionMode::Greedy;
                Rng ep(derive_seed(config.seed, {hash_tag("shot_demo"), si, static_cast<std::uint64_t>(e)}));
                auto res = env::run_episode(ei, box, config.budget, surrogate, ep, opts);
                for (auto& t : res.transitions) demo_buf.push(std::move(t));
            }
            if (e + 1 == episodes_per_shot + extra &&
                q_buf.size() < static_cast<std::size_t>(config.batch_size))
                ++extra;
            if (extra > 64) throw ConfigError("adapt: cannot fill one mini-batch from the shots");
        }
    }

    Rng batch_rng(derive_seed(config.seed, {hash_tag("shot_batches")}));
    auto batches = meta::draw_batches(q_buf, &demo_buf, adapt_steps, config.batch_size, config.kappa,
                                      batch_rng);
    meta::AdaptParams params{config.alpha, config.eta, config.temperature, config.gamma,
                             /*first_order=*/true};  // values only; no meta-gradient at test time
    adapted.set = meta::adapt(adapted.set, batches, params).detached();
    return adapted;
}

inline void cmd_adapt(const std::string& ckpt_path, const std::string& shots_spec, int adapt_steps,
                      const std::string& out_path, const ExperimentConfig& config,
                      int episodes_per_shot = 0) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    std::vector<env::TaskSpec> shots;
    for (const auto& spec : env::task_detail::split(shots_spec, ','))
        shots.push_back(env::parse_task_spec(spec, config.task_defaults()));
    Checkpoint adapted = adapt_checkpoint(ckpt, shots, adapt_steps, config, episodes_per_shot);
    save_checkpoint(adapted, out_path);
}

// --- evaluate -----------------------------------------------------------------

struct EvaluateOptions {
    std::string method;                  // fsaf | ei | pi | ucb | mes | random
    std::vector<std::string> task_specs;
    int trials = 100;
    int budget = 0;        // 0: config.budget
    std::string ckpt_path; // fsaf only
    std::string out_path;  // empty: do not write
    int workers = 1;
};

namespace eval_detail {

inline std::unique_ptr<env::AcquisitionPolicy> make_policy(const std::string& method,
                                                           const Checkpoint* ckpt, double ucb_delta,
                                                           const ExperimentConfig& config, Rng& trial_rng) {
    if (method == "ei") return std::make_unique<env::EiPolicy>();
    if (method == "pi") return std::make_unique<env::PiPolicy>();
    if (method == "mes") return std::make_unique<env::MesPolicy>();
    if (method == "random") return std::make_unique<env::RandomPolicy>();
    if (method == "ucb") return std::make_unique<env::UcbPolicy>(ucb_delta);
    if (method == "fsaf") {
        if (ckpt == nullptr) throw ConfigError("evaluate: method fsaf requires a checkpoint");
        auto policy = std::make_unique<env::FsafPolicy>(ckpt->set.arch, ckpt->set.particle_values());
        if (config.ensemble_mode == "sample")
            policy->restrict_to_particle(trial_rng.uniform_index(ckpt->set.num_particles()));
        return policy;
    }
    throw ConfigError("evaluate: unknown method '" + method + "'");
}

/// Per-trial environment: the function instance and its surrogate kernel.
/// Derived from (master seed, task, trial) only, never the method, so paired
/// trials of different methods face identical realizations.
struct TrialEnv {
    env::BlackBox box;
    gp::KernelSpec surrogate;
};

inline TrialEnv make_trial_env(const env::TaskSpec& task, std::size_t task_idx, int trial,
                               const ExperimentConfig& config, const gp::KernelSpec* fitted_surrogate,
                               const env::BlackBox* shared_box, const char* stream = "fn") {
    TrialEnv te;
    Rng fn_rng(derive_seed(config.seed, {hash_tag(stream), task_idx, static_cast<std::uint64_t>(trial)}));
    switch (task.kind) {
        case env::TaskSpec::Kind::Gp:
            te.box = env::make_blackbox(task, fn_rng);
            te.surrogate = *te.box.generating_kernel;  // ground-truth surrogate on GP tasks
            break;
        case env::TaskSpec::Kind::Benchmark: {
            env::TaskSpec aug = env::augment(task, fn_rng);
            te.box = env::make_benchmark_blackbox(aug);
            te.surrogate = *fitted_surrogate;
            break;
        }
        case env::TaskSpec::Kind::Csv:
            te.box = *shared_box;
            te.surrogate = *fitted_surrogate;
            break;
    }
    return te;
}

/// Marginal-likelihood RBF lengthscale fit on validation data drawn from a
/// dedicated seed stream (benchmark and CSV tasks).
inline gp::KernelSpec fit_surrogate(const env::TaskSpec& task, std::size_t task_idx,
                                    const ExperimentConfig& config, const env::BlackBox* shared_box) {
    Rng shots_rng(derive_seed(config.seed, {hash_tag("shots"), task_idx}));
    gp::Dataset data;
    if (task.kind == env::TaskSpec::Kind::Csv) {
        int n = std::min<int>(200, static_cast<int>(shared_box->grid.rows()));
        auto idx = shots_rng.sample_without_replacement(shared_box->grid.rows(), n);
        data.X = Eigen::MatrixXd(n, shared_box->grid.cols());
        data.y = Eigen::VectorXd(n);
        for (int i = 0; i < n; ++i) {
            data.X.row(i) = shared_box->grid.row(static_cast<Eigen::Index>(idx[i]));
            data.y[i] = shared_box->grid_values[static_cast<Eigen::Index>(idx[i])];
        }
    } else {
        env::TaskSpec aug = env::augment(task, shots_rng);
        env::BlackBox box = env::make_benchmark_blackbox(aug);
        Eigen::MatrixXd pts = env::map_to_box(sobol_grid(task.dim, std::max(task.grid_size, 64)),
                                              box.domain.lo, box.domain.hi);
        data.X = pts;
        data.y = Eigen::VectorXd(pts.rows());
        for (int i = 0; i < pts.rows(); ++i) data.y[i] = box.eval(pts.row(i).transpose());
    }
    data.noise_variance = 1e-4;
    return gp::fit_lengthscale(data, gp::KernelKind::Rbf);
}

inline double run_single_trial_regret(const std::string& method, const env::TaskSpec& task,
                                      std::size_t task_idx, int trial, const ExperimentConfig& config,
                                      const Checkpoint* ckpt, double ucb_delta,
                                      const gp::KernelSpec* fitted, const env::BlackBox* shared_box,
                                      int budget, const char* fn_stream, const char* ep_stream) {
    TrialEnv te = make_trial_env(task, task_idx, trial, config, fitted, shared_box, fn_stream);
    Rng ep_rng(derive_seed(config.seed, {hash_tag(ep_stream), task_idx, static_cast<std::uint64_t>(trial)}));
    auto policy = make_policy(method, ckpt, ucb_delta, config, ep_rng);
    env::EpisodeOptions opts;
    opts.n_coarse = config.n_coarse;
    opts.n_m = config.n_m;
    opts.n_local = config.n_local;
    auto result = env::run_episode(*policy, te.box, budget, te.surrogate, ep_rng, opts);
    return result.curve.final_regret();
}

/// The paper-style grid search for GP-UCB's confidence parameter.
inline double tune_ucb_delta(const env::TaskSpec& task, std::size_t task_idx,
                             const ExperimentConfig& config, const gp::KernelSpec* fitted,
                             const env::BlackBox* shared_box, int budget, int trials) {
    int n_tune = std::max(10, trials / 4);
    double best_delta = 0.1, best_median = std::numeric_limits<double>::infinity();
    for (double delta : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
        std::vector<double> regrets;
        for (int j = 0; j < n_tune; ++j)
            regrets.push_back(run_single_trial_regret("ucb", task, task_idx, j, config, nullptr, delta,
                                                      fitted, shared_box, budget, "tune_fn", "tune_ep"));
        double med = percentile(regrets, 50.0);
        if (med < best_median) {
            best_median = med;
            best_delta = delta;
        }
    }
    return best_delta;
}

/// Bounded queue with one consumer: the results-file writer.
class RecordQueue {
public:
    explicit RecordQueue(std::size_t capacity) : capacity_(capacity) {}

    void push(TrialRecord rec) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return items_.size() < capacity_; });
        items_.push(std::move(rec));
        not_empty_.notify_one();
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
    }

    std::optional<TrialRecord> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) return std::nullopt;
        TrialRecord rec = std::move(items_.front());
        items_.pop();
        not_full_.notify_one();
        return rec;
    }

private:
    std::size_t capacity_;
    std::mutex mu_;
    std::condition_variable not_full_, not_empty_;
    std::queue<TrialRecord> items_;
    bool closed_ = false;
};

}  // namespace eval_detail

inline std::vector<TrialRecord> cmd_evaluate(const ExperimentConfig& config, const EvaluateOptions& opts) {
    if (opts.trials < 1) throw ValueError("evaluate: trials must be >= 1");
    int budget = opts.budget > 0 ? opts.budget : config.budget;

    std::optional<Checkpoint> ckpt;
    if (opts.method == "fsaf") {
        if (opts.ckpt_path.empty()) throw ConfigError("evaluate: method fsaf requires --ckpt");
        ckpt = load_checkpoint(opts.ckpt_path);
    }

    // uniqueness within the results file: (method, task, trial)
    std::set<std::tuple<std::string, std::string, int>> existing;
    if (!opts.out_path.empty() && fs::exists(opts.out_path)) {
        for (const auto& rec : read_records(opts.out_path))
            existing.insert({rec.method, rec.task_id, rec.trial});
    }

    std::vector<TrialRecord> all_records;
    std::mutex records_mu;

    for (std::size_t task_idx = 0; task_idx < opts.task_specs.size(); ++task_idx) {
        env::TaskSpec task = env::parse_task_spec(opts.task_specs[task_idx], config.task_defaults());
        task.budget = budget;

        std::optional<env::BlackBox> shared_box;
        std::optional<gp::KernelSpec> fitted;
        if (task.kind == env::TaskSpec::Kind::Csv) {
            shared_box = env::load_csv_blackbox(task.csv_path, task.feature_cols, task.objective_col);
            fitted = eval_detail::fit_surrogate(task, task_idx, config,
                                                shared_box ? &*shared_box : nullptr);
        } else if (task.kind == env::TaskSpec::Kind::Benchmark) {
            fitted = eval_detail::fit_surrogate(task, task_idx, config, nullptr);
        }

        double ucb_delta = config.ucb_delta;
        if (opts.method == "ucb" && ucb_delta <= 0.0)
            ucb_delta = eval_detail::tune_ucb_delta(task, task_idx, config, fitted ? &*fitted : nullptr,
                                                    shared_box ? &*shared_box : nullptr, budget,
                                                    opts.trials);

        for (int trial = 0; trial < opts.trials; ++trial) {
            auto key = std::make_tuple(opts.method, task.id, trial);
            if (existing.count(key))
                throw ValueError("evaluate: results file already holds method=" + opts.method + " task=" +
                                 task.id + " trial=" + std::to_string(trial));
        }

        auto run_trial = [&, task, task_idx, ucb_delta](int trial) {
            auto start = std::chrono::steady_clock::now();
            eval_detail::TrialEnv te =
                eval_detail::make_trial_env(task, task_idx, trial, config, fitted ? &*fitted : nullptr,
                                            shared_box ? &*shared_box : nullptr);
            Rng ep_rng(derive_seed(config.seed,
                                   {hash_tag("ep"), task_idx, static_cast<std::uint64_t>(trial)}));
            auto policy = eval_detail::make_policy(opts.method, ckpt ? &*ckpt : nullptr, ucb_delta, config,
                                                   ep_rng);
            env::EpisodeOptions ep_opts;
            ep_opts.n_coarse = config.n_coarse;
            ep_opts.n_m = config.n_m;
            ep_opts.n_local = config.n_local;
            auto result = env::run_episode(*policy, te.box, budget, te.surrogate, ep_rng, ep_opts);

            TrialRecord rec;
            rec.method = opts.method;
            rec.task_id = task.id;
            rec.trial = trial;
            rec.seed = derive_seed(config.seed, {hash_tag("ep"), task_idx, static_cast<std::uint64_t>(trial)});
            rec.config_hash = config.hash();
            rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                              .count();
            rec.curve = std::move(result.curve);
            return rec;
        };

        if (opts.workers <= 1) {
            for (int trial = 0; trial < opts.trials; ++trial) {
                TrialRecord rec = run_trial(trial);
                std::lock_guard lock(records_mu);
                all_records.push_back(std::move(rec));
            }
        } else {
            // trials fan out across workers; one writer consumes a bounded queue
            eval_detail::RecordQueue queue(64);
            std::thread collector([&] {
                while (auto rec = queue.pop()) {
                    std::lock_guard lock(records_mu);
                    all_records.push_back(std::move(*rec));
                }
            });
            std::vector<std::thread> workers;
            std::atomic<int> next{0};
            for (int w = 0; w < opts.workers; ++w) {
                workers.emplace_back([&] {
                    while (true) {
                        int trial = next.fetch_add(1);
                        if (trial >= opts.trials) break;
                        queue.push(run_trial(trial));
                    }
                });
            }
            for (auto& w : workers) w.join();
            queue.close();
            collector.join();
        }
    }

    if (!opts.out_path.empty()) append_records(opts.out_path, all_records);
    return all_records;
}

// --- report -------------------------------------------------------------------

inline ReportResult cmd_report(const std::string& in_path, const ReportOptions& opts,
                               const std::string& table_path, const std::string& series_path) {
    auto records = read_records(in_path);
    ReportResult result = make_report(records, opts);
    if (!table_path.empty()) {
        std::ofstream out(table_path);
        if (!out) throw IoError("report: cannot write " + table_path);
        out << result.table_csv;
    }
    if (!series_path.empty()) {
        std::ofstream out(series_path);
        if (!out) throw IoError("report: cannot write " + series_path);
        out << result.series_csv;
    }
    return result;
}

}  // namespace fsaf::harness
