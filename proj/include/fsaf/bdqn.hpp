// bdqn.hpp - Bayesian DQN core: replay buffers, empirical TD cost, demo-policy
// similarity, Stein variational gradients/updates over a particle ensemble of
// Q-networks, and target-network synchronization.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <deque>
#include <optional>
#include <vector>

#include "fsaf/autodiff.hpp"
#include "fsaf/qnet.hpp"
#include "fsaf/util.hpp"

namespace fsaf::bdqn {

using ad::Var;
using Eigen::VectorXd;
using qnet::Arch;
using qnet::ParamVars;
using qnet::ParamVec;
using qnet::StateFeatures;

struct Transition {
    StateFeatures s;
    int action = 0;
    double reward = 0.0;
    StateFeatures s_next;  // ignored on terminal transitions (no bootstrap)
    bool terminal = false;
};

enum class BufferKind { Q, Demo };

/// FIFO ring buffer of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 1000, BufferKind kind = BufferKind::Q)
        : capacity_(capacity), kind_(kind) {
        if (capacity == 0) throw ValueError("ReplayBuffer: capacity must be positive");
    }

    BufferKind kind() const { return kind_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }

    void push(Transition t) {
        if (t.action < 0 || t.action >= t.s.grid_size)
            throw ValueError("ReplayBuffer: action index outside the state's grid");
        if (items_.size() == capacity_) items_.pop_front();
        items_.push_back(std::move(t));
    }

    const Transition& at(std::size_t i) const { return items_[i]; }

    /// Uniform sample without replacement within the batch.
    std::vector<const Transition*> sample(std::size_t batch_size, Rng& rng) const {
        if (batch_size > items_.size())
            throw ValueError("ReplayBuffer: batch of " + std::to_string(batch_size) +
                             " from buffer of " + std::to_string(items_.size()));
        auto idx = rng.sample_without_replacement(items_.size(), batch_size);
        std::vector<const Transition*> out;
        out.reserve(batch_size);
        for (auto i : idx) out.push_back(&items_[i]);
        return out;
    }

private:
    std::size_t capacity_;
    BufferKind kind_;
    std::deque<Transition> items_;
};

/// Mini-batch assembled into stacked feature tensors. All transitions must
/// share one grid size.
struct AssembledBatch {
    int batch_size = 0;
    int grid_size = 0;
    Var adv_in_s;        // (B*M) x 4
    Var val_in_s;        // B x 2
    Var adv_in_next;     // (B*M) x 4
    Var val_in_next;     // B x 2
    std::vector<int> actions;
    Tensor rewards;      // B x 1
    Tensor not_terminal; // B x 1
};

inline AssembledBatch assemble(const std::vector<const Transition*>& batch) {
    if (batch.empty()) throw ValueError("assemble: empty batch");
    int m = batch[0]->s.grid_size;
    int b = static_cast<int>(batch.size());
    Tensor adv_s(b * m, 4), adv_n(b * m, 4), val_s(b, 2), val_n(b, 2);
    AssembledBatch out;
    out.batch_size = b;
    out.grid_size = m;
    out.rewards = Tensor(b, 1);
    out.not_terminal = Tensor(b, 1);
    out.actions.resize(b);
    for (int i = 0; i < b; ++i) {
        const Transition& t = *batch[i];
        if (t.s.grid_size != m || (!t.terminal && t.s_next.grid_size != m))
            throw ShapeError("assemble: mixed grid sizes in one batch");
        std::copy(t.s.rows.begin(), t.s.rows.end(), adv_s.data.begin() + static_cast<std::size_t>(i) * m * 4);
        const StateFeatures& nxt = t.terminal ? t.s : t.s_next;
        std::copy(nxt.rows.begin(), nxt.rows.end(), adv_n.data.begin() + static_cast<std::size_t>(i) * m * 4);
        val_s.at(i, 0) = t.s.y_best;
        val_s.at(i, 1) = t.s.t_ratio;
        val_n.at(i, 0) = nxt.y_best;
        val_n.at(i, 1) = nxt.t_ratio;
        out.actions[i] = t.action;
        out.rewards.data[i] = t.reward;
        out.not_terminal.data[i] = t.terminal ? 0.0 : 1.0;
    }
    out.adv_in_s = Var::constant(std::move(adv_s));
    out.val_in_s = Var::constant(std::move(val_s));
    out.adv_in_next = Var::constant(std::move(adv_n));
    out.val_in_next = Var::constant(std::move(val_n));
    return out;
}

/// Empirical mean-squared TD cost of one particle against its target network.
/// The bootstrap term r + gamma * max_a' Q(s', a'; theta^-) carries no
/// gradient; terminal transitions bootstrap nothing.
inline Var td_cost(const Arch& arch, const ParamVars& particle, const ParamVec& target,
                   const AssembledBatch& batch, double gamma) {
    if (gamma < 0.0 || gamma >= 1.0) throw ValueError("td_cost: gamma must lie in [0, 1)");
    Tensor target_vals(batch.batch_size, 1);
    {
        ad::NoGradGuard guard;
        Var qn = qnet::q_matrix(arch, qnet::as_constants(target), batch.adv_in_next, batch.val_in_next,
                                batch.batch_size, batch.grid_size);
        Var best = ad::row_max(qn);
        for (int i = 0; i < batch.batch_size; ++i)
            target_vals.data[i] =
                batch.rewards.data[i] + gamma * best.value().data[i] * batch.not_terminal.data[i];
    }
    Var q = qnet::q_matrix(arch, particle, batch.adv_in_s, batch.val_in_s, batch.batch_size,
                           batch.grid_size);
    Var q_sa = ad::select_cols(q, batch.actions);
    return ad::mean_all(ad::square(ad::sub(Var::constant(target_vals), q_sa)));
}

/// Empirical demo-similarity: mean over the batch of log pi_theta(s, a) with
/// the Boltzmann policy at the given temperature.
inline Var demo_similarity(const Arch& arch, const ParamVars& particle, const AssembledBatch& demo,
                           double temperature) {
    if (temperature <= 0.0) throw ValueError("demo_similarity: temperature must be positive");
    Var q = qnet::q_matrix(arch, particle, demo.adv_in_s, demo.val_in_s, demo.batch_size, demo.grid_size);
    Var z = ad::scale(q, 1.0 / temperature);
    Var logp = ad::sub(ad::select_cols(z, demo.actions), ad::row_logsumexp(z));
    return ad::mean_all(logp);
}

// --- particle set -------------------------------------------------------------

/// N Q-network particles plus N target copies.
struct ParticleSet {
    Arch arch;
    std::vector<ParamVars> particles;
    std::vector<ParamVec> targets;
    long iteration = 0;

    int num_particles() const { return static_cast<int>(particles.size()); }

    static ParticleSet init(const Arch& arch, int n, Rng& rng) {
        if (n < 1) throw ValueError("ParticleSet: need at least one particle");
        ParticleSet set;
        set.arch = arch;
        for (int i = 0; i < n; ++i) {
            auto p = qnet::init_params(arch, rng);
            set.targets.push_back(p);
            set.particles.push_back(qnet::as_leaves(p));
        }
        return set;
    }

    std::vector<ParamVec> particle_values() const {
        std::vector<ParamVec> out;
        out.reserve(particles.size());
        for (const auto& p : particles) out.push_back(qnet::values_of(p));
        return out;
    }

    /// Same values as fresh leaves, disconnected from any recorded graph.
    ParticleSet detached() const {
        ParticleSet set;
        set.arch = arch;
        set.targets = targets;
        set.iteration = iteration;
        for (const auto& p : particles) set.particles.push_back(qnet::as_leaves(qnet::values_of(p)));
        return set;
    }

    /// Same values as constants: gradients cannot flow into or out of them.
    ParticleSet constants() const {
        ParticleSet set;
        set.arch = arch;
        set.targets = targets;
        set.iteration = iteration;
        for (const auto& p : particles) set.particles.push_back(qnet::as_constants(qnet::values_of(p)));
        return set;
    }
};

/// theta^- <- theta for every particle.
inline void sync_targets(ParticleSet& set) {
    for (int n = 0; n < set.num_particles(); ++n) set.targets[n] = qnet::values_of(set.particles[n]);
}

// --- SVGD ---------------------------------------------------------------------

inline Var flatten_params(const ParamVars& params) {
    std::vector<Var> parts;
    parts.reserve(params.size());
    for (const auto& p : params)
        parts.push_back(ad::reshape(p, p.rows() * p.cols(), 1));
    return ad::concat_rows(parts);
}

inline ParamVars unflatten_params(const Arch& arch, const Var& flat) {
    ParamVars out;
    int offset = 0;
    for (auto [r, c] : arch.layer_shapes()) {
        out.push_back(ad::reshape(ad::slice_rows(flat, offset, offset + r * c), r, c));
        offset += r * c;
    }
    return out;
}

/// Median-heuristic bandwidth h = med(d^2) / log(N+1), floored at 1e-8.
/// The median is a selection fixed at forward time, so the returned Var is
/// differentiable w.r.t. the particles (needed by the chaser meta-gradient).
inline Var median_bandwidth(const std::vector<Var>& flats) {
    int n = static_cast<int>(flats.size());
    std::vector<Var> d2;
    std::vector<double> vals;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            Var d = ad::sum_all(ad::square(ad::sub(flats[i], flats[j])));
            vals.push_back(d.scalar());
            d2.push_back(d);
        }
    }
    std::vector<std::size_t> order(vals.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    Var med;
    if (order.size() % 2 == 1) {
        med = d2[order[order.size() / 2]];
    } else {
        med = ad::scale(ad::add(d2[order[order.size() / 2 - 1]], d2[order[order.size() / 2]]), 0.5);
    }
    Var h = ad::scale(med, 1.0 / std::log(static_cast<double>(n) + 1.0));
    if (h.scalar() < 1e-8) h = Var::constant(1e-8);  // floor; constant branch of the piecewise max
    return h;
}

/// Stein variational directions for all particles:
///   g^(n) = (1/N) sum_i [ grad_i * k(th_i, th_n) + grad_{th_i} k(th_i, th_n) ]
/// with the RBF kernel k = exp(-||th_i - th_n||^2 / h). `objective_grads` are
/// the flattened per-particle gradients of the log-target (-C/alpha + delta).
inline std::vector<Var> svgd_directions(const std::vector<Var>& flats,
                                        const std::vector<Var>& objective_grads,
                                        std::optional<double> fixed_bandwidth = std::nullopt) {
    int n = static_cast<int>(flats.size());
    if (n == 0) throw ValueError("svgd_directions: no particles");
    if (static_cast<int>(objective_grads.size()) != n)
        throw ValueError("svgd_directions: gradient count mismatch");
    int dim = flats[0].rows();

    if (n == 1) return {objective_grads[0]};  // kernel 1, kernel-gradient 0

    Var h = fixed_bandwidth ? Var::constant(*fixed_bandwidth) : median_bandwidth(flats);

    // kernel values k_ij as Vars (symmetric)
    std::vector<std::vector<Var>> k(n, std::vector<Var>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            if (i == j) {
                k[i][j] = Var::constant(1.0);
            } else {
                Var d2 = ad::sum_all(ad::square(ad::sub(flats[i], flats[j])));
                k[i][j] = ad::exp(ad::neg(ad::divide(d2, h)));
                k[j][i] = k[i][j];
            }
        }
    }

    Var h_col = ad::bcast_scalar(h, dim, 1);
    std::vector<Var> dirs;
    dirs.reserve(n);
    for (int nn = 0; nn < n; ++nn) {
        Var acc;
        for (int i = 0; i < n; ++i) {
            Var k_b = ad::bcast_scalar(k[i][nn], dim, 1);
            Var term = ad::mul(objective_grads[i], k_b);
            if (i != nn) {
                // grad_{th_i} k(th_i, th_n) = k * (-2/h) (th_i - th_n)
                Var diff = ad::sub(flats[i], flats[nn]);
                term = ad::add(term, ad::mul(k_b, ad::scale(ad::divide(diff, h_col), -2.0)));
            }
            acc = acc.defined() ? ad::add(acc, term) : term;
        }
        dirs.push_back(ad::scale(acc, 1.0 / static_cast<double>(n)));
    }
    return dirs;
}

/// Kernel matrix and per-pair gradients at the current particle values
/// (value-level view of the same computation, for inspection and tests).
struct SvgdKernel {
    Eigen::MatrixXd k;
    std::vector<std::vector<VectorXd>> grad;  // grad[i][n] = d k(th_i, th_n) / d th_i
    double bandwidth = 0.0;
};

inline SvgdKernel svgd_kernel(const std::vector<VectorXd>& flats,
                              std::optional<double> fixed_bandwidth = std::nullopt) {
    int n = static_cast<int>(flats.size());
    if (n == 0) throw ValueError("svgd_kernel: no particles");
    ad::NoGradGuard guard;
    std::vector<Var> fv;
    for (const auto& f : flats)
        fv.push_back(Var::constant(Tensor(static_cast<int>(f.size()), 1,
                                          std::vector<double>(f.data(), f.data() + f.size()))));
    SvgdKernel out;
    out.bandwidth = fixed_bandwidth ? *fixed_bandwidth : (n > 1 ? median_bandwidth(fv).scalar() : 1.0);
    out.k = Eigen::MatrixXd::Ones(n, n);
    out.grad.assign(n, std::vector<VectorXd>(n, VectorXd::Zero(flats[0].size())));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            double d2 = (flats[i] - flats[j]).squaredNorm();
            out.k(i, j) = std::exp(-d2 / out.bandwidth);
            out.grad[i][j] = out.k(i, j) * (-2.0 / out.bandwidth) * (flats[i] - flats[j]);
        }
    }
    return out;
}

/// One SVGD position update for generic particle positions (used by the
/// sanity checks on known log-densities; shares the direction computation).
inline std::vector<VectorXd> svgd_step_positions(const std::vector<VectorXd>& positions,
                                                 const std::vector<VectorXd>& grad_logp, double eta) {
    ad::NoGradGuard guard;
    std::vector<Var> flats, grads;
    for (const auto& p : positions)
        flats.push_back(Var::constant(Tensor(static_cast<int>(p.size()), 1,
                                             std::vector<double>(p.data(), p.data() + p.size()))));
    for (const auto& g : grad_logp)
        grads.push_back(Var::constant(Tensor(static_cast<int>(g.size()), 1,
                                             std::vector<double>(g.data(), g.data() + g.size()))));
    auto dirs = svgd_directions(flats, grads);
    std::vector<VectorXd> out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        out[i] = positions[i];
        for (int j = 0; j < out[i].size(); ++j) out[i][j] += eta * dirs[i].value().data[j];
    }
    return out;
}

// --- ParticleSet-level operations ----------------------------------------------

/// Flattened per-particle objective gradients of -C(theta)/alpha (+ delta when a
/// demo batch is supplied). With create_graph the gradients stay on the tape.
inline std::vector<Var> objective_grads(const ParticleSet& set, const AssembledBatch& q_batch,
                                        const AssembledBatch* demo_batch, double alpha,
                                        double temperature, double gamma, bool create_graph) {
    if (alpha <= 0.0) throw ValueError("objective_grads: alpha must be positive");
    std::vector<Var> out;
    for (int n = 0; n < set.num_particles(); ++n) {
        Var cost = td_cost(set.arch, set.particles[n], set.targets[n], q_batch, gamma);
        Var objective = ad::scale(cost, -1.0 / alpha);
        if (demo_batch != nullptr)
            objective = ad::add(objective, demo_similarity(set.arch, set.particles[n], *demo_batch,
                                                           temperature));
        auto grads = ad::grad(objective, set.particles[n], create_graph);
        out.push_back(flatten_params(grads));
    }
    return out;
}

/// Spec-level SVGD gradient: value view (no graph retained).
inline std::vector<Tensor> svgd_gradient(const ParticleSet& set, const AssembledBatch& q_batch,
                                         const AssembledBatch* demo_batch, double alpha,
                                         double temperature, double gamma) {
    std::vector<Var> flats;
    for (const auto& p : set.particles) flats.push_back(flatten_params(p).detach());
    auto grads = objective_grads(set, q_batch, demo_batch, alpha, temperature, gamma, false);
    ad::NoGradGuard guard;
    auto dirs = svgd_directions(flats, grads);
    std::vector<Tensor> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs) out.push_back(d.value());
    return out;
}

/// theta^(n) <- theta^(n) + eta * g^(n); plain value update, targets untouched.
inline void svgd_step(ParticleSet& set, const std::vector<Tensor>& directions, double eta) {
    if (eta <= 0.0) throw ValueError("svgd_step: eta must be positive");
    if (static_cast<int>(directions.size()) != set.num_particles())
        throw ValueError("svgd_step: direction count mismatch");
    for (int n = 0; n < set.num_particles(); ++n) {
        ParamVec values = qnet::values_of(set.particles[n]);
        std::size_t at = 0;
        for (auto& t : values) {
            for (double& v : t.data) v += eta * directions[n].data[at++];
        }
        set.particles[n] = qnet::as_leaves(values);
    }
    set.iteration += 1;
}

/// Differentiable SVGD update: new particle Vars whose dependence on the old
/// particles (and everything upstream) stays recorded.
inline ParticleSet svgd_step_differentiable(const ParticleSet& set, const AssembledBatch& q_batch,
                                            const AssembledBatch* demo_batch, double alpha,
                                            double temperature, double gamma, double eta,
                                            bool first_order = false) {
    if (eta <= 0.0) throw ValueError("svgd_step: eta must be positive");
    std::vector<Var> flats;
    for (const auto& p : set.particles) flats.push_back(flatten_params(p));
    auto grads = objective_grads(set, q_batch, demo_batch, alpha, temperature, gamma,
                                 /*create_graph=*/!first_order);
    auto dirs = svgd_directions(flats, grads);
    if (first_order) {
        // whole direction treated as constant: the step's Jacobian is the identity
        for (auto& d : dirs) d = d.detach();
    }
    ParticleSet out;
    out.arch = set.arch;
    out.targets = set.targets;
    out.iteration = set.iteration + 1;
    for (int n = 0; n < set.num_particles(); ++n) {
        Var updated = ad::add(flats[n], ad::scale(dirs[n], eta));
        out.particles.push_back(unflatten_params(set.arch, updated));
    }
    return out;
}

}  // namespace fsaf::bdqn
