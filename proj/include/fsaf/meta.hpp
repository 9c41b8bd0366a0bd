// meta.hpp - meta-training loop: task sampling, K-step SVGD adaptation
// (chaser), S-step leader, chaser meta-loss, meta-gradient update, and
// checkpoint selection.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsaf/bdqn.hpp"
#include "fsaf/env.hpp"
#include "fsaf/util.hpp"

namespace fsaf::meta {

using ad::Var;
using bdqn::ParticleSet;
using bdqn::ReplayBuffer;
using bdqn::Transition;

struct StepBatches {
    std::vector<Transition> q_batch;
    std::optional<std::vector<Transition>> demo_batch;  // present when the demo term fires
};

/// Pre-draws one mini-batch list per SVGD step. The demo term is included
/// per step with probability kappa (and only when the demo buffer can fill a
/// batch), per the demo-ratio mixing semantics.
inline std::vector<StepBatches> draw_batches(const ReplayBuffer& q_buf, const ReplayBuffer* demo_buf,
                                             int steps, int batch_size, double kappa, Rng& rng) {
    if (q_buf.size() < static_cast<std::size_t>(batch_size))
        throw ValueError("draw_batches: Q buffer holds " + std::to_string(q_buf.size()) +
                         " transitions, need " + std::to_string(batch_size));
    std::vector<StepBatches> out;
    out.reserve(steps);
    for (int k = 0; k < steps; ++k) {
        StepBatches sb;
        for (const Transition* t : q_buf.sample(batch_size, rng)) sb.q_batch.push_back(*t);
        bool draw_demo = demo_buf != nullptr && kappa > 0.0 && rng.uniform() < kappa &&
                         demo_buf->size() >= static_cast<std::size_t>(batch_size);
        if (draw_demo) {
            sb.demo_batch.emplace();
            for (const Transition* t : demo_buf->sample(batch_size, rng)) sb.demo_batch->push_back(*t);
        }
        out.push_back(std::move(sb));
    }
    return out;
}

struct AdaptParams {
    double alpha = 1.0;
    double eta = 0.01;
    double temperature = 1.0;
    double gamma = 0.98;
    bool first_order = false;
};

/// K SVGD steps on the pre-drawn mini-batches, recorded for higher-order
/// differentiation (exact mode). K = 0 returns the input unchanged.
inline ParticleSet adapt(const ParticleSet& init, const std::vector<StepBatches>& batches,
                         const AdaptParams& params) {
    ParticleSet set = init;
    for (const auto& sb : batches) {
        auto q_batch = bdqn::assemble([&] {
            std::vector<const Transition*> ptrs;
            for (const auto& t : sb.q_batch) ptrs.push_back(&t);
            return ptrs;
        }());
        std::optional<bdqn::AssembledBatch> demo;
        if (sb.demo_batch) {
            demo = bdqn::assemble([&] {
                std::vector<const Transition*> ptrs;
                for (const auto& t : *sb.demo_batch) ptrs.push_back(&t);
                return ptrs;
            }());
        }
        set = bdqn::svgd_step_differentiable(set, q_batch, demo ? &*demo : nullptr, params.alpha,
                                             params.temperature, params.gamma, params.eta,
                                             params.first_order);
    }
    return set;
}

/// S additional SVGD steps from the chaser on fresh mini-batches, detached
/// from the tape (the stop-gradient surrogate for the true posterior).
inline ParticleSet leader(const ParticleSet& chaser, const std::vector<StepBatches>& batches,
                          const AdaptParams& params) {
    // First-order steps from a detached copy: identical values, and the
    // trailing detach guarantees no gradient path back to the chaser.
    ParticleSet detached = chaser.detached();
    AdaptParams value_params = params;
    value_params.first_order = true;
    return adapt(detached, batches, value_params).constants();
}

/// Chaser loss: sum over matched particles of the squared parameter distance.
inline Var chaser_loss(const ParticleSet& chaser, const ParticleSet& lead) {
    if (chaser.num_particles() != lead.num_particles())
        throw ValueError("chaser_loss: particle-count mismatch");
    Var total;
    for (int n = 0; n < chaser.num_particles(); ++n) {
        Var cf = bdqn::flatten_params(chaser.particles[n]);
        Var lf = bdqn::flatten_params(lead.particles[n]).detach();
        Var d = ad::sum_all(ad::square(ad::sub(cf, lf)));
        total = total.defined() ? ad::add(total, d) : d;
    }
    return total;
}

/// TD meta-loss variant (the "w/o chaser" ablation): sum over particles of the
/// empirical TD cost of the adapted particles on a validation batch.
inline Var td_meta_loss(const ParticleSet& adapted, const StepBatches& val_batch, double gamma) {
    auto batch = bdqn::assemble([&] {
        std::vector<const Transition*> ptrs;
        for (const auto& t : val_batch.q_batch) ptrs.push_back(&t);
        return ptrs;
    }());
    Var total;
    for (int n = 0; n < adapted.num_particles(); ++n) {
        Var c = bdqn::td_cost(adapted.arch, adapted.particles[n], adapted.targets[n], batch, gamma);
        total = total.defined() ? ad::add(total, c) : c;
    }
    return total;
}

/// One plain gradient step on the summed per-task losses:
/// Theta <- Theta - beta * grad. Losses must be scalars built from the
/// particle leaves of `init`. A NaN meta-gradient aborts naming the task.
inline ParticleSet apply_meta_gradient(const ParticleSet& init, const std::vector<Var>& task_losses,
                                       const std::vector<std::string>& task_names, double beta) {
    std::vector<Var> leaves;
    for (const auto& p : init.particles)
        for (const auto& w : p) leaves.push_back(w);

    std::vector<Tensor> acc;
    for (std::size_t ti = 0; ti < task_losses.size(); ++ti) {
        std::vector<Var> g;
        try {
            g = ad::grad(task_losses[ti], leaves);
        } catch (const ValueError& e) {
            std::string task = ti < task_names.size() ? task_names[ti] : std::to_string(ti);
            throw ValueError("meta-gradient failure on task '" + task + "': " + e.what());
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g[i].value().has_nan()) {
                std::string task = ti < task_names.size() ? task_names[ti] : std::to_string(ti);
                throw ValueError("NaN meta-gradient on task '" + task + "'");
            }
            if (acc.size() <= i) acc.push_back(g[i].value());
            else {
                for (std::size_t k = 0; k < acc[i].data.size(); ++k)
                    acc[i].data[k] += g[i].value().data[k];
            }
        }
    }

    ParticleSet out;
    out.arch = init.arch;
    out.targets = init.targets;
    out.iteration = init.iteration;
    std::size_t li = 0;
    for (const auto& p : init.particles) {
        qnet::ParamVec values;
        for (const auto& w : p) {
            Tensor t = w.value();
            if (!acc.empty()) {
                for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] -= beta * acc[li].data[k];
            }
            ++li;
            values.push_back(std::move(t));
        }
        out.particles.push_back(qnet::as_leaves(values));
    }
    return out;
}

// --- training log ---------------------------------------------------------------

struct IterationRecord {
    int iteration = 0;
    double avg_return = 0.0;   // mean episode return over this iteration's rollouts
    double train_metric = 0.0; // mean -log regret at the metric step
    double meta_loss = 0.0;
    std::vector<std::pair<std::string, double>> task_returns;
};

struct TrainLog {
    std::vector<IterationRecord> records;
};

/// Iteration whose rollouts had the best average episode return; ties go to
/// the later iteration.
inline int select_checkpoint(const TrainLog& log) {
    if (log.records.empty()) throw ValueError("select_checkpoint: empty log");
    std::size_t best = 0;
    for (std::size_t i = 1; i < log.records.size(); ++i)
        if (log.records[i].avg_return >= log.records[best].avg_return) best = i;
    return static_cast<int>(best);
}

// --- trainer ---------------------------------------------------------------------

struct TrainSettings {
    qnet::Arch arch{2, 32};
    int num_particles = 5;
    int adapt_steps = 5;   // K
    int leader_steps = 1;  // S
    double alpha = 1.0;
    double eta = 0.01;
    double beta = 0.001;
    double gamma = 0.98;
    double kappa = 1.0 / 128.0;
    double temperature = 1.0;
    int batch_size = 128;
    std::size_t buffer_capacity = 1000;
    int target_update_interval = 5;
    int iterations = 200;
    int task_batch_size = 3;
    int episodes_per_task = 4;
    int budget = 30;  // T
    int metric_step = 30;
    std::uint64_t seed = 0;
    bool first_order = false;
    bool chaser = true;  // false: TD meta-loss ("w/o chaser" ablation)
    std::vector<env::TaskSpec> tasks;
};

class Trainer {
public:
    using IterationHook = std::function<void(const ParticleSet&, const IterationRecord&)>;

    explicit Trainer(TrainSettings settings) : settings_(std::move(settings)) {
        if (settings_.tasks.empty()) throw ConfigError("Trainer: no tasks configured");
        if (settings_.task_batch_size > static_cast<int>(settings_.tasks.size()))
            throw ConfigError("Trainer: task batch larger than the task collection");
        Rng init_rng(derive_seed(settings_.seed, {hash_tag("init")}));
        set_ = ParticleSet::init(settings_.arch, settings_.num_particles, init_rng);
        for (std::size_t i = 0; i < settings_.tasks.size(); ++i) {
            q_buffers_.emplace_back(settings_.buffer_capacity, bdqn::BufferKind::Q);
            demo_buffers_.emplace_back(settings_.buffer_capacity, bdqn::BufferKind::Demo);
        }
    }

    const ParticleSet& particles() const { return set_; }
    const TrainLog& log() const { return log_; }
    void set_iteration_hook(IterationHook hook) { hook_ = std::move(hook); }

    /// Restores trainer state from a checkpointed particle set (buffers
    /// restart empty and refill on the next iteration).
    void restore(ParticleSet set) { set_ = std::move(set); }

    void run() {
        int start = static_cast<int>(set_.iteration);
        for (int iter = start; iter < settings_.iterations; ++iter) run_iteration(iter);
    }

    void run_iteration(int iter) {
        Rng task_rng(derive_seed(settings_.seed, {hash_tag("tasks"), static_cast<std::uint64_t>(iter)}));
        auto picked = task_rng.sample_without_replacement(settings_.tasks.size(),
                                                          static_cast<std::size_t>(settings_.task_batch_size));

        IterationRecord rec;
        rec.iteration = iter;
        double return_sum = 0.0, metric_sum = 0.0;
        int episode_count = 0;

        // rollouts: fill each picked task's buffers with fresh trajectories
        for (std::size_t pi = 0; pi < picked.size(); ++pi) {
            std::size_t task_idx = picked[pi];
            const env::TaskSpec& task = settings_.tasks[task_idx];
            double task_return = 0.0;
            int extra = 0;
            for (int e = 0; e < settings_.episodes_per_task + extra; ++e) {
                auto curve = collect_episode(iter, task_idx, e, /*demo=*/false);
                task_return += curve.total_reward();
                metric_sum += metric_of(curve);
                ++episode_count;
                if (e + 1 == settings_.episodes_per_task + extra &&
                    q_buffers_[task_idx].size() < static_cast<std::size_t>(settings_.batch_size))
                    ++extra;  // top up until one mini-batch fits
                if (extra > 64) throw ConfigError("Trainer: cannot fill the Q buffer to one batch");
            }
            if (settings_.kappa > 0.0) {
                for (int e = 0; e < settings_.episodes_per_task; ++e)
                    collect_episode(iter, task_idx, e, /*demo=*/true);
            }
            return_sum += task_return;
            rec.task_returns.emplace_back(task.id, task_return / settings_.episodes_per_task);
        }

        // adapt / leader / meta-loss per task
        std::vector<Var> losses;
        std::vector<std::string> names;
        double loss_sum = 0.0;
        for (std::size_t pi = 0; pi < picked.size(); ++pi) {
            std::size_t task_idx = picked[pi];
            Rng batch_rng(derive_seed(settings_.seed, {hash_tag("batches"), static_cast<std::uint64_t>(iter),
                                                       static_cast<std::uint64_t>(task_idx)}));
            AdaptParams params{settings_.alpha, settings_.eta, settings_.temperature, settings_.gamma,
                               settings_.first_order};
            auto train_batches =
                draw_batches(q_buffers_[task_idx], &demo_buffers_[task_idx], settings_.adapt_steps,
                             settings_.batch_size, settings_.kappa, batch_rng);
            ParticleSet chaser = adapt(set_, train_batches, params);

            Var loss;
            if (settings_.chaser) {
                auto val_batches =
                    draw_batches(q_buffers_[task_idx], &demo_buffers_[task_idx], settings_.leader_steps,
                                 settings_.batch_size, settings_.kappa, batch_rng);
                ParticleSet lead = leader(chaser, val_batches, params);
                loss = chaser_loss(chaser, lead);
            } else {
                auto val_batches = draw_batches(q_buffers_[task_idx], nullptr, 1, settings_.batch_size,
                                                0.0, batch_rng);
                loss = td_meta_loss(chaser, val_batches[0], settings_.gamma);
            }
            loss_sum += loss.scalar();
            losses.push_back(loss);
            names.push_back(settings_.tasks[task_idx].id);
        }

        set_ = apply_meta_gradient(set_, losses, names, settings_.beta);
        set_.iteration = iter + 1;
        if ((iter + 1) % settings_.target_update_interval == 0) bdqn::sync_targets(set_);

        rec.avg_return = return_sum / std::max(episode_count, 1);
        rec.train_metric = metric_sum / std::max(episode_count, 1);
        rec.meta_loss = loss_sum;
        log_.records.push_back(rec);
        if (hook_) hook_(set_, rec);
    }

    ReplayBuffer& q_buffer(std::size_t task_idx) { return q_buffers_.at(task_idx); }
    ReplayBuffer& demo_buffer(std::size_t task_idx) { return demo_buffers_.at(task_idx); }

private:
    double metric_of(const env::RegretCurve& curve) {
        int step = std::min(settings_.metric_step, settings_.budget);
        return env::reward_from_regret(curve.regret_at(step));
    }

    env::RegretCurve collect_episode(int iter, std::size_t task_idx, int episode, bool demo) {
        const env::TaskSpec& task = settings_.tasks[task_idx];
        Rng fn_rng(derive_seed(settings_.seed, {hash_tag(demo ? "demo_fn" : "fn"),
                                                static_cast<std::uint64_t>(iter),
                                                static_cast<std::uint64_t>(task_idx),
                                                static_cast<std::uint64_t>(episode)}));
        env::BlackBox box = env::make_blackbox(task, fn_rng, /*force_discrete=*/true);
        gp::KernelSpec surrogate =
            box.generating_kernel ? *box.generating_kernel : task.kernel;  // ground truth in training

        Rng ep_rng(derive_seed(settings_.seed, {hash_tag(demo ? "demo_ep" : "ep"),
                                                static_cast<std::uint64_t>(iter),
                                                static_cast<std::uint64_t>(task_idx),
                                                static_cast<std::uint64_t>(episode)}));
        env::EpisodeOptions opts;
        opts.record_transitions = true;
        env::EpisodeResult result;
        if (demo) {
            env::EiPolicy ei;  // demo policy runs greedily over EI scores
            opts.action_mode = qnet::ActionMode::Greedy;
            result = env::run_episode(ei, box, settings_.budget, surrogate, ep_rng, opts);
            for (auto& t : result.transitions) demo_buffers_[task_idx].push(std::move(t));
        } else {
            env::FsafPolicy policy(set_.arch, set_.particle_values());
            opts.action_mode = qnet::ActionMode::Boltzmann;
            opts.temperature = settings_.temperature;
            result = env::run_episode(policy, box, settings_.budget, surrogate, ep_rng, opts);
            for (auto& t : result.transitions) q_buffers_[task_idx].push(std::move(t));
        }
        return result.curve;
    }

    TrainSettings settings_;
    ParticleSet set_;
    std::vector<ReplayBuffer> q_buffers_;
    std::vector<ReplayBuffer> demo_buffers_;
    TrainLog log_;
    IterationHook hook_;
};

}  // namespace fsaf::meta
