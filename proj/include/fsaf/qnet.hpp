// qnet.hpp - the neural acquisition function: featurization of BO state into
// per-point (mu, sigma, y_best, t/T) rows, a dueling Q-network scoring every
// candidate point, and the induced stochastic/greedy policies.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fsaf/acquisition.hpp"
#include "fsaf/autodiff.hpp"
#include "fsaf/gp.hpp"
#include "fsaf/tensor.hpp"
#include "fsaf/util.hpp"

namespace fsaf::qnet {

using ad::Var;
using gp::GpPosterior;

/// Dueling network architecture. The advantage stream reads the per-point
/// 4-tuple, the value stream reads the shared (y_best, t/T) pair.
struct Arch {
    int hidden_layers = 2;
    int hidden_width = 32;

    static constexpr int kAdvantageInputs = 4;
    static constexpr int kValueInputs = 2;

    /// Weight/bias shapes, advantage stream first then value stream.
    std::vector<std::pair<int, int>> layer_shapes() const {
        std::vector<std::pair<int, int>> shapes;
        auto stream = [&](int in) {
            int prev = in;
            for (int l = 0; l < hidden_layers; ++l) {
                shapes.emplace_back(prev, hidden_width);
                shapes.emplace_back(1, hidden_width);
                prev = hidden_width;
            }
            shapes.emplace_back(prev, 1);
            shapes.emplace_back(1, 1);
        };
        stream(kAdvantageInputs);
        stream(kValueInputs);
        return shapes;
    }

    int tensors_per_stream() const { return 2 * (hidden_layers + 1); }

    int param_count() const {
        int total = 0;
        for (auto [r, c] : layer_shapes()) total += r * c;
        return total;
    }

    bool operator==(const Arch&) const = default;
};

using ParamVec = std::vector<Tensor>;  // storage form
using ParamVars = std::vector<Var>;    // graph form

/// Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline ParamVec init_params(const Arch& arch, Rng& rng) {
    ParamVec params;
    for (auto [r, c] : arch.layer_shapes()) {
        // bias rows share the preceding weight's fan-in
        int fan_in = (r == 1 && !params.empty()) ? params.back().rows : r;
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor t(r, c);
        for (double& v : t.data) v = rng.uniform(-bound, bound);
        params.push_back(std::move(t));
    }
    return params;
}

inline ParamVars as_leaves(const ParamVec& params) {
    ParamVars vars;
    vars.reserve(params.size());
    for (const auto& t : params) vars.push_back(Var::leaf(t));
    return vars;
}

inline ParamVars as_constants(const ParamVec& params) {
    ParamVars vars;
    vars.reserve(params.size());
    for (const auto& t : params) vars.push_back(Var::constant(t));
    return vars;
}

inline ParamVec values_of(const ParamVars& vars) {
    ParamVec out;
    out.reserve(vars.size());
    for (const auto& v : vars) out.push_back(v.value());
    return out;
}

inline void check_param_shapes(const Arch& arch, const ParamVars& params) {
    auto shapes = arch.layer_shapes();
    if (params.size() != shapes.size())
        throw ShapeError("qnet: expected " + std::to_string(shapes.size()) + " parameter tensors, got " +
                         std::to_string(params.size()));
    for (std::size_t i = 0; i < shapes.size(); ++i)
        if (params[i].rows() != shapes[i].first || params[i].cols() != shapes[i].second)
            throw ShapeError("qnet: parameter " + std::to_string(i) + " has shape " +
                             params[i].value().shape_str());
}

/// Per-grid-point state-action features plus the shared value-stream pair.
struct StateFeatures {
    int grid_size = 0;
    std::vector<double> rows;  // grid_size x 4 row-major: (mu, sigma, y_best, t/T)
    double y_best = 0.0;
    double t_ratio = 0.0;
};

inline StateFeatures featurize(const GpPosterior& post, double y_best, int t, int T) {
    if (t < 1 || t > T) throw ValueError("featurize: step t=" + std::to_string(t) + " outside [1, T=" +
                                         std::to_string(T) + "]");
    StateFeatures f;
    f.grid_size = post.size();
    f.y_best = y_best;
    f.t_ratio = static_cast<double>(t) / T;
    f.rows.resize(static_cast<std::size_t>(f.grid_size) * 4);
    for (int i = 0; i < f.grid_size; ++i) {
        f.rows[4 * i + 0] = post.mean[i];
        f.rows[4 * i + 1] = post.std[i];
        f.rows[4 * i + 2] = y_best;
        f.rows[4 * i + 3] = f.t_ratio;
    }
    return f;
}

namespace detail {

inline Var mlp(const ParamVars& params, int first_tensor, int n_layers, const Var& x) {
    Var h = x;
    int idx = first_tensor;
    for (int l = 0; l <= n_layers; ++l) {
        const Var& w = params[idx++];
        const Var& b = params[idx++];
        h = ad::add(ad::matmul(h, w), ad::rep_rows(b, h.rows()));
        if (l < n_layers) h = ad::relu(h);
    }
    return h;
}

}  // namespace detail

/// Batched dueling forward: B states sharing grid size M.
///   adv_in: (B*M) x 4 stacked per-point rows, val_in: B x 2 shared pairs.
/// Returns the B x M matrix Q(s,a) = V(s) + A(s,a) - mean_a' A(s,a').
inline Var q_matrix(const Arch& arch, const ParamVars& params, const Var& adv_in, const Var& val_in,
                    int batch, int grid_size) {
    check_param_shapes(arch, params);
    Var a_flat = detail::mlp(params, 0, arch.hidden_layers, adv_in);             // (B*M) x 1
    Var v = detail::mlp(params, arch.tensors_per_stream(), arch.hidden_layers, val_in);  // B x 1
    Var a = ad::reshape(a_flat, batch, grid_size);
    Var centered = ad::sub(a, ad::rep_cols(ad::row_mean(a), grid_size));
    return ad::add(centered, ad::rep_cols(v, grid_size));
}

/// Differentiable per-point Q-values for a single state (M x 1).
inline Var q_values_var(const Arch& arch, const ParamVars& params, const StateFeatures& feats) {
    Var adv_in = Var::constant(Tensor(feats.grid_size, 4, feats.rows));
    Var val_in = Var::constant(Tensor(1, 2, {feats.y_best, feats.t_ratio}));
    Var q = q_matrix(arch, params, adv_in, val_in, 1, feats.grid_size);
    return ad::reshape(q, feats.grid_size, 1);
}

/// Q-values of one network on one state.
inline std::vector<double> q_values(const Arch& arch, const ParamVec& params, const StateFeatures& feats) {
    ad::NoGradGuard guard;
    return q_values_var(arch, as_constants(params), feats).value().data;
}

/// Boltzmann distribution over the grid: softmax(q / temperature), computed
/// via log-sum-exp. Strictly positive for finite inputs.
inline std::vector<double> policy(const std::vector<double>& q, double temperature) {
    if (temperature <= 0.0) throw ValueError("policy: temperature must be positive");
    if (q.empty()) throw ValueError("policy: empty grid");
    double m = q[0];
    for (double v : q) m = std::max(m, v);
    double sum = 0.0;
    std::vector<double> p(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        p[i] = std::exp((q[i] - m) / temperature);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

enum class ActionMode { Greedy, Boltzmann };

/// Greedy: lowest-index argmax. Boltzmann: sample from policy(q, temperature).
inline int select_action(const std::vector<double>& q, ActionMode mode, double temperature, Rng& rng) {
    if (q.empty()) throw ValueError("select_action: empty grid");
    if (mode == ActionMode::Greedy) return static_cast<int>(af::argmax_lowest(q));
    std::vector<double> p = policy(q, temperature);
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
}

/// FSAF acquisition scores: mean of the particles' Q-values.
inline std::vector<double> ensemble_scores(const Arch& arch, const std::vector<ParamVec>& particles,
                                           const StateFeatures& feats) {
    if (particles.empty()) throw ValueError("ensemble_scores: no particles");
    std::vector<double> acc(feats.grid_size, 0.0);
    for (const auto& p : particles) {
        auto q = q_values(arch, p, feats);
        for (int i = 0; i < feats.grid_size; ++i) acc[i] += q[i];
    }
    for (double& v : acc) v /= static_cast<double>(particles.size());
    return acc;
}

}  // namespace fsaf::qnet
