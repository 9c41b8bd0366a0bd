// env.hpp - black-box environments and the BO episode engine: task specs,
// GP-sampled and benchmark functions, CSV black-boxes, reward/regret
// accounting, acquisition policies, and hierarchical-gridding AF maximization.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fsaf/acquisition.hpp"
#include "fsaf/bdqn.hpp"
#include "fsaf/benchmarks.hpp"
#include "fsaf/csv.hpp"
#include "fsaf/gp.hpp"
#include "fsaf/qnet.hpp"
#include "fsaf/sobol.hpp"
#include "fsaf/util.hpp"

namespace fsaf::env {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using gp::GpPosterior;

constexpr double kRegretFloor = 1e-10;

/// Clipped log reward: finite and strictly decreasing on [0, inf) apart from
/// the flat clip below the floor.
inline double reward_from_regret(double regret, double floor = kRegretFloor) {
    return -std::log(std::max(regret, floor));
}

// --- task specification -------------------------------------------------------

struct TaskSpec {
    enum class Kind { Gp, Benchmark, Csv };

    Kind kind = Kind::Gp;
    std::string id;

    gp::KernelSpec kernel;  // Gp

    std::string benchmark_name;  // Benchmark
    int dim = 1;

    std::string csv_path;  // Csv
    std::vector<std::string> feature_cols;
    std::string objective_col;

    DomainBox domain;
    int grid_size = 64;
    int budget = 30;
    double noise_variance = 1e-4;

    // augmentation (identity by default)
    VectorXd translation;
    double y_scale = 1.0;
};

/// Random translation within +/- 10% of the half-range per dimension and a
/// y-scale factor from [0.9, 1.1]; parameters recorded on the spec.
inline TaskSpec augment(const TaskSpec& task, Rng& rng) {
    task.domain.validate();
    TaskSpec out = task;
    out.translation = VectorXd(task.domain.dim());
    for (int i = 0; i < task.domain.dim(); ++i) {
        double x_lim = 0.5 * (task.domain.hi[i] - task.domain.lo[i]);
        out.translation[i] = rng.uniform(-0.1 * x_lim, 0.1 * x_lim);
    }
    out.y_scale = rng.uniform(0.9, 1.1);
    return out;
}

// --- black boxes ----------------------------------------------------------------

struct BlackBox {
    std::function<double(const VectorXd&)> eval;  // noiseless
    MatrixXd grid;        // evaluation grid, one point per row
    VectorXd grid_values; // noiseless values on the grid
    double f_star = 0.0;  // max of grid_values
    double noise_variance = 0.0;
    bool discrete = true;  // discrete: episodes act on grid indices
    DomainBox domain;
    std::optional<gp::KernelSpec> generating_kernel;  // GP tasks: the drawn spec
};

inline BlackBox make_gp_blackbox(const gp::KernelSpec& kernel, const DomainBox& domain, int grid_size,
                                 double noise_variance, Rng& rng) {
    domain.validate();
    if (grid_size < 2) throw ValueError("make_gp_blackbox: grid too small");
    BlackBox box;
    box.domain = domain;
    box.discrete = true;
    box.noise_variance = noise_variance;
    box.grid = map_to_box(sobol_grid(domain.dim(), grid_size), domain.lo, domain.hi);
    gp::KernelSpec concrete = kernel.sample_lengthscale(rng);
    box.grid_values = gp::sample_prior_function(concrete, box.grid, rng);
    box.f_star = box.grid_values.maxCoeff();
    box.generating_kernel = concrete;
    MatrixXd grid_copy = box.grid;
    VectorXd values_copy = box.grid_values;
    box.eval = [grid_copy, values_copy](const VectorXd& x) {
        // nearest-row lookup; discrete episodes only ever pass grid rows
        Eigen::Index best = 0;
        (grid_copy.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff(&best);
        return values_copy[best];
    };
    return box;
}

inline BlackBox make_benchmark_blackbox(const TaskSpec& task) {
    auto def = benchmark_def(task.benchmark_name, task.dim);
    auto scaled = benchmark_scaled(task.benchmark_name, task.dim);
    VectorXd translation =
        task.translation.size() == task.dim ? task.translation : VectorXd::Zero(task.dim);
    double y_scale = task.y_scale;
    BlackBox box;
    box.domain = def.domain;
    box.discrete = false;
    box.noise_variance = task.noise_variance;
    box.eval = [scaled, translation, y_scale](const VectorXd& x) {
        return y_scale * scaled(x - translation);
    };
    box.grid = benchmark_scan_grid(task.benchmark_name, task.dim);
    box.grid_values = VectorXd(box.grid.rows());
    for (int i = 0; i < box.grid.rows(); ++i) box.grid_values[i] = box.eval(box.grid.row(i).transpose());
    box.f_star = box.grid_values.maxCoeff();
    return box;
}

/// Discrete benchmark view: candidate grid restricted to `grid_size` Sobol
/// points (used when episodes must emit grid-indexed transitions).
inline BlackBox make_benchmark_blackbox_discrete(const TaskSpec& task) {
    BlackBox full = make_benchmark_blackbox(task);
    BlackBox box;
    box.domain = full.domain;
    box.discrete = true;
    box.noise_variance = task.noise_variance;
    box.grid = map_to_box(sobol_grid(task.dim, task.grid_size), full.domain.lo, full.domain.hi);
    box.grid_values = VectorXd(box.grid.rows());
    for (int i = 0; i < box.grid.rows(); ++i) box.grid_values[i] = full.eval(box.grid.row(i).transpose());
    box.f_star = box.grid_values.maxCoeff();
    box.eval = full.eval;
    return box;
}

inline BlackBox load_csv_blackbox(const std::string& path, const std::vector<std::string>& feature_cols,
                                  const std::string& objective_col) {
    if (feature_cols.empty()) throw ValueError("csv black-box: no feature columns selected");
    std::vector<std::string> cols = feature_cols;
    cols.push_back(objective_col);
    CsvTable table = read_csv_columns(path, cols);

    int n = static_cast<int>(table.rows.size());
    int d = static_cast<int>(feature_cols.size());
    MatrixXd X(n, d);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) X(i, j) = table.rows[i][j];
        y[i] = table.rows[i][d];
    }

    // min-max normalize features to [0,1]^d
    for (int j = 0; j < d; ++j) {
        double lo = X.col(j).minCoeff(), hi = X.col(j).maxCoeff();
        if (hi > lo)
            X.col(j) = (X.col(j).array() - lo) / (hi - lo);
        else
            X.col(j).setZero();
    }

    // duplicate feature rows are ambiguous lookups
    std::map<std::vector<double>, int> seen;
    for (int i = 0; i < n; ++i) {
        std::vector<double> key(X.row(i).data(), X.row(i).data() + d);
        auto [it, inserted] = seen.emplace(std::move(key), i);
        if (!inserted)
            throw ValueError("csv black-box: duplicate feature rows " + std::to_string(it->second + 1) +
                             " and " + std::to_string(i + 1));
    }

    double y_lo = y.minCoeff(), y_hi = y.maxCoeff();
    if (!(y_hi > y_lo)) throw ValueError("csv black-box: constant objective column");
    VectorXd scaled = (-2.0 + 4.0 * (y.array() - y_lo) / (y_hi - y_lo)).matrix();

    BlackBox box;
    box.domain = DomainBox::cube(0.0, 1.0, d);
    box.discrete = true;
    box.noise_variance = 0.0;  // noiseless lookup
    box.grid = X;
    box.grid_values = scaled;
    box.f_star = scaled.maxCoeff();
    MatrixXd grid_copy = X;
    VectorXd values_copy = scaled;
    box.eval = [grid_copy, values_copy](const VectorXd& x) {
        Eigen::Index best = 0;
        (grid_copy.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff(&best);
        return values_copy[best];
    };
    return box;
}

/// Builds the function instance a task describes. GP tasks draw a fresh
/// function from `rng`; benchmark/CSV instances are deterministic given the
/// spec (augmentation parameters included).
inline BlackBox make_blackbox(const TaskSpec& task, Rng& rng, bool force_discrete = false) {
    switch (task.kind) {
        case TaskSpec::Kind::Gp:
            return make_gp_blackbox(task.kernel, task.domain, task.grid_size, task.noise_variance, rng);
        case TaskSpec::Kind::Benchmark:
            return force_discrete ? make_benchmark_blackbox_discrete(task) : make_benchmark_blackbox(task);
        case TaskSpec::Kind::Csv:
            return load_csv_blackbox(task.csv_path, task.feature_cols, task.objective_col);
    }
    throw ValueError("make_blackbox: bad task kind");
}

// --- acquisition policies -------------------------------------------------------

struct StepContext {
    double y_best = 0.0;
    int t = 1;
    int T = 1;
    int main_grid_size = 0;  // candidate count of the step's primary grid
    Rng* rng = nullptr;
};

/// Scores candidate points given their posterior. begin_step runs once per BO
/// step on the primary grid before any scoring (per-step state like the MES
/// max-value draw lives there).
class AcquisitionPolicy {
public:
    virtual ~AcquisitionPolicy() = default;
    virtual std::string name() const = 0;
    virtual void begin_step(const GpPosterior& /*grid_post*/, const StepContext& /*ctx*/) {}
    virtual std::vector<double> scores(const GpPosterior& post, const StepContext& ctx) = 0;
};

class EiPolicy : public AcquisitionPolicy {
public:
    std::string name() const override { return "ei"; }
    std::vector<double> scores(const GpPosterior& post, const StepContext& ctx) override {
        return af::ei(post, ctx.y_best).scores;
    }
};

class PiPolicy : public AcquisitionPolicy {
public:
    std::string name() const override { return "pi"; }
    std::vector<double> scores(const GpPosterior& post, const StepContext& ctx) override {
        return af::pi(post, ctx.y_best).scores;
    }
};

class UcbPolicy : public AcquisitionPolicy {
public:
    explicit UcbPolicy(double delta) : delta_(delta) {
        if (delta <= 0.0) throw ValueError("UcbPolicy: delta must be positive");
    }
    std::string name() const override { return "ucb"; }
    void begin_step(const GpPosterior&, const StepContext& ctx) override {
        beta_ = af::ucb_beta(ctx.main_grid_size, ctx.t, delta_);
    }
    std::vector<double> scores(const GpPosterior& post, const StepContext&) override {
        return af::ucb(post, beta_).scores;
    }

private:
    double delta_;
    double beta_ = 1.0;
};

class MesPolicy : public AcquisitionPolicy {
public:
    std::string name() const override { return "mes"; }
    void begin_step(const GpPosterior& grid_post, const StepContext& ctx) override {
        auto fit = af::mes_fit_gumbel(grid_post);
        y_star_ = af::gumbel_sample(fit, *ctx.rng);
    }
    std::vector<double> scores(const GpPosterior& post, const StepContext&) override {
        std::vector<double> s(post.size());
        for (int i = 0; i < post.size(); ++i) s[i] = af::mes_point_score(post.mean[i], post.std[i], y_star_);
        return s;
    }

private:
    double y_star_ = 0.0;
};

class RandomPolicy : public AcquisitionPolicy {
public:
    std::string name() const override { return "random"; }
    std::vector<double> scores(const GpPosterior& post, const StepContext& ctx) override {
        return af::random_af(post.size(), *ctx.rng).scores;
    }
};

/// The learned acquisition function: mean ensemble Q over the particles, or a
/// single sampled particle per episode behind the sampling flag.
class FsafPolicy : public AcquisitionPolicy {
public:
    FsafPolicy(qnet::Arch arch, std::vector<qnet::ParamVec> particles)
        : arch_(arch), particles_(std::move(particles)) {
        if (particles_.empty()) throw ValueError("FsafPolicy: no particles");
    }

    /// Sampling mode: score with one particle only.
    void restrict_to_particle(std::size_t index) {
        particles_ = {particles_.at(index)};
    }

    std::string name() const override { return "fsaf"; }
    std::vector<double> scores(const GpPosterior& post, const StepContext& ctx) override {
        auto feats = qnet::featurize(post, ctx.y_best, ctx.t, ctx.T);
        return qnet::ensemble_scores(arch_, particles_, feats);
    }

private:
    qnet::Arch arch_;
    std::vector<qnet::ParamVec> particles_;
};

// --- regret accounting -----------------------------------------------------------

struct RegretStep {
    int t = 0;
    int action_index = -1;  // -1 when the point came from continuous refinement
    VectorXd x;
    double y = 0.0;       // noisy observation
    double best = 0.0;    // running max of observed y
    double regret = 0.0;  // simple regret from noiseless values, floored at 0
    double reward = 0.0;
};

struct RegretCurve {
    std::vector<RegretStep> steps;

    double total_reward() const {
        double s = 0.0;
        for (const auto& st : steps) s += st.reward;
        return s;
    }
    double regret_at(int t) const {
        for (const auto& st : steps)
            if (st.t == t) return st.regret;
        throw ValueError("RegretCurve: no step t=" + std::to_string(t));
    }
    double final_regret() const {
        if (steps.empty()) throw ValueError("RegretCurve: empty");
        return steps.back().regret;
    }
};

// --- hierarchical gridding ---------------------------------------------------------

struct HierarchicalResult {
    VectorXd point;
    double score;
};

/// Two-level Sobol maximization of a score function over a box: coarse scan,
/// then local Sobol grids of half-width (domain width) * N_coarse^(-1/d)
/// around the N_m best coarse points. Never returns less than the best coarse
/// candidate. Precomputed coarse scores can be supplied to avoid rescoring.
inline HierarchicalResult hierarchical_argmax(
    const std::function<VectorXd(const MatrixXd&)>& score_fn, const DomainBox& box, int n_coarse, int n_m,
    int n_local, const MatrixXd* coarse_pts = nullptr, const VectorXd* coarse_scores = nullptr) {
    box.validate();
    if (n_coarse < 1 || n_m < 1 || n_local < 1) throw ValueError("hierarchical_argmax: bad counts");
    int d = box.dim();

    MatrixXd coarse = coarse_pts ? *coarse_pts : map_to_box(sobol_grid(d, n_coarse), box.lo, box.hi);
    VectorXd scores = coarse_scores ? *coarse_scores : score_fn(coarse);
    if (scores.size() != coarse.rows()) throw ShapeError("hierarchical_argmax: score count mismatch");

    std::vector<int> order(coarse.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    int keep = std::min<int>(n_m, static_cast<int>(coarse.rows()));
    std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                      [&](int a, int b) { return scores[a] > scores[b]; });

    Eigen::Index best_coarse;
    double best_score = scores.maxCoeff(&best_coarse);
    VectorXd best_point = coarse.row(best_coarse).transpose();

    double shrink = std::pow(static_cast<double>(n_coarse), -1.0 / d);
    VectorXd half_width = (box.hi - box.lo) * shrink;

    MatrixXd local_unit = sobol_grid(d, n_local);
    for (int k = 0; k < keep; ++k) {
        VectorXd center = coarse.row(order[k]).transpose();
        VectorXd lo = (center - half_width).cwiseMax(box.lo);
        VectorXd hi = (center + half_width).cwiseMin(box.hi);
        MatrixXd local = map_to_box(local_unit, lo, hi);
        VectorXd ls = score_fn(local);
        for (int i = 0; i < ls.size(); ++i) {
            if (ls[i] > best_score) {
                best_score = ls[i];
                best_point = local.row(i).transpose();
            }
        }
    }
    return {best_point, best_score};
}

// --- episode runner -----------------------------------------------------------------

struct EpisodeOptions {
    qnet::ActionMode action_mode = qnet::ActionMode::Greedy;
    double temperature = 1.0;
    bool record_transitions = false;
    double regret_floor = kRegretFloor;
    int n_coarse = 2000;
    int n_m = 10;
    int n_local = 1000;
};

struct EpisodeResult {
    RegretCurve curve;
    std::vector<bdqn::Transition> transitions;
};

/// One BO episode of budget T. The first sample is uniform over the grid; the
/// policy acts from step 2 on. Observations are the noiseless value plus
/// Gaussian noise; regret tracks the noiseless values of the sampled points.
inline EpisodeResult run_episode(AcquisitionPolicy& policy, const BlackBox& box, int T,
                                 const gp::KernelSpec& surrogate, Rng& rng,
                                 const EpisodeOptions& opts = {}) {
    if (T < 1) throw ValueError("run_episode: budget must be >= 1");
    if (opts.record_transitions && !box.discrete)
        throw ValueError("run_episode: transitions require a discrete candidate grid");

    EpisodeResult result;
    gp::Dataset data;
    data.X = MatrixXd(0, box.domain.dim());
    data.y = VectorXd(0);
    data.noise_variance = box.noise_variance;
    double noise_std = std::sqrt(box.noise_variance);

    double best_y = 0.0, best_f = 0.0;
    bool first = true;

    MatrixXd coarse;  // continuous tasks: per-episode coarse grid
    if (!box.discrete) coarse = map_to_box(sobol_grid(box.domain.dim(), opts.n_coarse), box.domain.lo,
                                           box.domain.hi);

    // pending transition: s, action, reward from the previous policy step
    bool have_pending = false;
    bdqn::Transition pending;

    auto observe = [&](int t, int action_index, const VectorXd& x, double f_noiseless) {
        double y = f_noiseless + (noise_std > 0.0 ? noise_std * rng.normal() : 0.0);
        int n = data.size();
        MatrixXd X2(n + 1, data.X.cols());
        VectorXd y2(n + 1);
        if (n > 0) {
            X2.topRows(n) = data.X;
            y2.head(n) = data.y;
        }
        X2.row(n) = x.transpose();
        y2[n] = y;
        data.X = std::move(X2);
        data.y = std::move(y2);
        best_y = first ? y : std::max(best_y, y);
        best_f = first ? f_noiseless : std::max(best_f, f_noiseless);
        first = false;

        RegretStep step;
        step.t = t;
        step.action_index = action_index;
        step.x = x;
        step.y = y;
        step.best = best_y;
        step.regret = std::max(box.f_star - best_f, 0.0);
        step.reward = reward_from_regret(step.regret, opts.regret_floor);
        result.curve.steps.push_back(step);
        return step.reward;
    };

    // step 1: uniform-random grid point, before the policy acts
    {
        std::size_t idx = rng.uniform_index(static_cast<std::size_t>(box.grid.rows()));
        observe(1, static_cast<int>(idx), box.grid.row(static_cast<Eigen::Index>(idx)).transpose(),
                box.grid_values[static_cast<Eigen::Index>(idx)]);
    }

    for (int t = 2; t <= T; ++t) {
        StepContext ctx;
        ctx.y_best = best_y;
        ctx.t = t;
        ctx.T = T;
        ctx.rng = &rng;

        if (box.discrete) {
            ctx.main_grid_size = static_cast<int>(box.grid.rows());
            GpPosterior post = gp::posterior(data, surrogate, box.grid);
            policy.begin_step(post, ctx);
            std::vector<double> scores = policy.scores(post, ctx);
            int action = qnet::select_action(scores, opts.action_mode, opts.temperature, rng);

            double reward = observe(t, action, box.grid.row(action).transpose(), box.grid_values[action]);

            if (opts.record_transitions) {
                auto feats = qnet::featurize(post, ctx.y_best, t, T);
                if (have_pending) {
                    pending.s_next = feats;
                    pending.terminal = false;
                    result.transitions.push_back(pending);
                }
                pending.s = feats;
                pending.action = action;
                pending.reward = reward;
                have_pending = true;
            }
        } else {
            ctx.main_grid_size = static_cast<int>(coarse.rows());
            auto score_points = [&](const MatrixXd& pts) {
                GpPosterior post = gp::posterior(data, surrogate, pts);
                std::vector<double> s = policy.scores(post, ctx);
                return Eigen::Map<VectorXd>(s.data(), s.size()).eval();
            };
            GpPosterior coarse_post = gp::posterior(data, surrogate, coarse);
            policy.begin_step(coarse_post, ctx);
            std::vector<double> cs = policy.scores(coarse_post, ctx);
            VectorXd coarse_scores = Eigen::Map<VectorXd>(cs.data(), cs.size());
            auto top = hierarchical_argmax(score_points, box.domain, opts.n_coarse, opts.n_m, opts.n_local,
                                           &coarse, &coarse_scores);
            observe(t, -1, top.point, box.eval(top.point));
        }
    }

    if (have_pending) {
        pending.s_next = pending.s;  // terminal transitions carry no bootstrap
        pending.terminal = true;
        result.transitions.push_back(pending);
    }
    return result;
}

// --- task-spec parsing ---------------------------------------------------------------

struct TaskDefaults {
    int dim = 1;
    int grid_size = 64;
    int budget = 30;
    double noise_variance = 1e-4;
};

namespace task_detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::pair<double, double> parse_range(const std::string& s) {
    auto at = s.find("..");
    if (at == std::string::npos) {
        double v = std::stod(s);
        return {v, v};
    }
    return {std::stod(s.substr(0, at)), std::stod(s.substr(at + 2))};
}

}  // namespace task_detail

/// Task mini-language, colon-separated:
///   gp_rbf:ell=0.07..0.13[:d=1][:grid=64]
///   gp_matern32:ell=0.2
///   gp_sm:ell=0.27..0.33:periods=0.3/0.6
///   ackley[:d=2] | eggholder | dixon_price | styblinski_tang | powell
///   csv:path=file.csv:features=a+b+c:objective=y
inline TaskSpec parse_task_spec(const std::string& text, const TaskDefaults& defaults) {
    auto parts = task_detail::split(text, ':');
    if (parts.empty() || parts[0].empty()) throw ParseError("task spec: empty");
    TaskSpec task;
    task.id = text;
    task.grid_size = defaults.grid_size;
    task.budget = defaults.budget;
    task.noise_variance = defaults.noise_variance;
    task.dim = defaults.dim;

    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        auto eq = parts[i].find('=');
        if (eq == std::string::npos) throw ParseError("task spec: expected key=value in '" + parts[i] + "'");
        kv[parts[i].substr(0, eq)] = parts[i].substr(eq + 1);
    }
    auto take = [&](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };

    const std::string& head = parts[0];
    if (head.rfind("gp_", 0) == 0) {
        task.kind = TaskSpec::Kind::Gp;
        std::string kern = head.substr(3);
        if (auto d = take("d")) task.dim = std::stoi(*d);
        if (auto g = take("grid")) task.grid_size = std::stoi(*g);
        task.domain = DomainBox::cube(0.0, 1.0, task.dim);
        auto ell = take("ell");
        if (!ell) throw ParseError("task spec: gp tasks need ell=<value|lo..hi>");
        auto [lo, hi] = task_detail::parse_range(*ell);
        task.kernel.ell_lo = lo;
        task.kernel.ell_hi = hi;
        task.kernel.lengthscale = 0.5 * (lo + hi);
        if (kern == "rbf") {
            task.kernel.kind = gp::KernelKind::Rbf;
        } else if (kern == "matern32") {
            task.kernel.kind = gp::KernelKind::Matern32;
        } else if (kern == "sm") {
            task.kernel.kind = gp::KernelKind::SpectralMixture;
            std::string periods = take("periods").value_or("0.3/0.6");
            task.kernel.components.clear();
            for (const auto& p : task_detail::split(periods, '/'))
                task.kernel.components.push_back({1.0, std::stod(p), task.kernel.lengthscale});
            for (auto& c : task.kernel.components) c.weight = 1.0 / task.kernel.components.size();
        } else {
            throw ParseError("task spec: unknown gp kernel '" + kern + "'");
        }
    } else if (head == "csv") {
        task.kind = TaskSpec::Kind::Csv;
        auto path = take("path");
        auto features = take("features");
        auto objective = take("objective");
        if (!path || !features || !objective)
            throw ParseError("task spec: csv needs path=, features=a+b+c, objective=");
        task.csv_path = *path;
        task.feature_cols = task_detail::split(*features, '+');
        task.objective_col = *objective;
        task.dim = static_cast<int>(task.feature_cols.size());
        task.domain = DomainBox::cube(0.0, 1.0, task.dim);
    } else {
        task.kind = TaskSpec::Kind::Benchmark;
        task.benchmark_name = head;
        task.dim = benchmark_default_dim(head);
        if (auto d = take("d")) task.dim = std::stoi(*d);
        if (auto g = take("grid")) task.grid_size = std::stoi(*g);
        task.domain = benchmark_def(head, task.dim).domain;
    }
    if (auto n = take("noise")) task.noise_variance = std::stod(*n);
    if (auto b = take("budget")) task.budget = std::stoi(*b);
    if (!kv.empty()) throw ParseError("task spec: unknown key '" + kv.begin()->first + "' in '" + text + "'");
    return task;
}

/// The nine training tasks: RBF and Matern-3/2 with lengthscale ranges
/// [0.07,0.13], [0.17,0.23], [0.27,0.33]; spectral mixtures with two
/// components of periods 0.3/0.6 and lengthscale ranges [0.27,0.33],
/// [0.47,0.53], [0.57,0.63].
inline std::vector<std::string> default_training_tasks() {
    return {
        "gp_rbf:ell=0.07..0.13",  "gp_rbf:ell=0.17..0.23",      "gp_rbf:ell=0.27..0.33",
        "gp_matern32:ell=0.07..0.13", "gp_matern32:ell=0.17..0.23", "gp_matern32:ell=0.27..0.33",
        "gp_sm:ell=0.27..0.33:periods=0.3/0.6", "gp_sm:ell=0.47..0.53:periods=0.3/0.6",
        "gp_sm:ell=0.57..0.63:periods=0.3/0.6",
    };
}

}  // namespace fsaf::env
