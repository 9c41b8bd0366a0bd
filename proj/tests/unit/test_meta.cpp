#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fsaf/meta.hpp"
#include "test_helpers.hpp"

using namespace fsaf;
using namespace fsaf::meta;
using bdqn::ParticleSet;
using bdqn::Transition;

namespace {

qnet::StateFeatures tiny_feats(int m, Rng& rng) {
    qnet::StateFeatures f;
    f.grid_size = m;
    f.y_best = rng.uniform(-1, 1);
    f.t_ratio = rng.uniform(0.1, 1.0);
    f.rows.resize(static_cast<std::size_t>(m) * 4);
    for (int i = 0; i < m; ++i) {
        f.rows[4 * i + 0] = rng.normal();
        f.rows[4 * i + 1] = std::abs(rng.normal());
        f.rows[4 * i + 2] = f.y_best;
        f.rows[4 * i + 3] = f.t_ratio;
    }
    return f;
}

std::vector<Transition> tiny_batch(int count, int m, Rng& rng) {
    std::vector<Transition> out;
    for (int i = 0; i < count; ++i) {
        Transition t;
        t.s = tiny_feats(m, rng);
        t.action = static_cast<int>(rng.uniform_index(m));
        t.reward = rng.normal();
        t.s_next = tiny_feats(m, rng);
        t.terminal = (i == count - 1);
        out.push_back(std::move(t));
    }
    return out;
}

struct Pipeline {
    qnet::Arch arch{1, 1};  // 12 parameters total
    int n_particles = 2;
    std::vector<StepBatches> train_batches;
    std::vector<StepBatches> val_batches;
    AdaptParams params;
    std::vector<qnet::ParamVec> target_values;

    ParticleSet set_from(const std::vector<double>& flat) const {
        ParticleSet set;
        set.arch = arch;
        auto shapes = arch.layer_shapes();
        std::size_t at = 0;
        for (int n = 0; n < n_particles; ++n) {
            qnet::ParamVec values;
            for (auto [r, c] : shapes) {
                Tensor t(r, c, std::vector<double>(flat.begin() + at, flat.begin() + at + r * c));
                at += static_cast<std::size_t>(r) * c;
                values.push_back(std::move(t));
            }
            set.particles.push_back(qnet::as_leaves(values));
            set.targets.push_back(target_values[n]);
        }
        return set;
    }

    /// Loss with the leader FROZEN (it is stop-gradient in the meta-loss, so
    /// the finite-difference oracle must not differentiate through it).
    double loss_value_frozen_leader(const std::vector<double>& flat, const ParticleSet& frozen_leader) const {
        ParticleSet set = set_from(flat);
        ParticleSet chaser = adapt(set, train_batches, params);
        return chaser_loss(chaser, frozen_leader).scalar();
    }
};

Pipeline make_pipeline(int K, int S, bool first_order, std::uint64_t seed) {
    Pipeline p;
    Rng rng(seed);
    p.params.alpha = 1.0;
    p.params.eta = 0.05;
    p.params.gamma = 0.9;
    p.params.temperature = 1.0;
    p.params.first_order = first_order;
    for (int n = 0; n < p.n_particles; ++n) p.target_values.push_back(qnet::init_params(p.arch, rng));
    for (int k = 0; k < K; ++k) {
        StepBatches sb;
        sb.q_batch = tiny_batch(8, 5, rng);
        if (k == 0) sb.demo_batch = tiny_batch(8, 5, rng);  // exercise the demo term too
        p.train_batches.push_back(std::move(sb));
    }
    for (int s = 0; s < S; ++s) {
        StepBatches sb;
        sb.q_batch = tiny_batch(8, 5, rng);
        p.val_batches.push_back(std::move(sb));
    }
    return p;
}

std::vector<double> random_flat(const Pipeline& p, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> flat;
    for (int n = 0; n < p.n_particles; ++n) {
        auto params = qnet::init_params(p.arch, rng);
        for (const auto& t : params) flat.insert(flat.end(), t.data.begin(), t.data.end());
    }
    return flat;
}

std::vector<double> exact_meta_grad(const Pipeline& p, const std::vector<double>& flat) {
    ParticleSet set = p.set_from(flat);
    ParticleSet chaser = adapt(set, p.train_batches, p.params);
    ParticleSet lead = leader(chaser, p.val_batches, p.params);
    ad::Var loss = chaser_loss(chaser, lead);
    std::vector<ad::Var> leaves;
    for (const auto& particle : set.particles)
        for (const auto& w : particle) leaves.push_back(w);
    auto grads = ad::grad(loss, leaves);
    std::vector<double> out;
    for (const auto& g : grads) out.insert(out.end(), g.value().data.begin(), g.value().data.end());
    return out;
}

}  // namespace

TEST_CASE("adapt with K = 0 is the identity") {
    auto p = make_pipeline(0, 1, false, 1);
    auto flat = random_flat(p, 2);
    ParticleSet set = p.set_from(flat);
    ParticleSet out = adapt(set, {}, p.params);
    for (int n = 0; n < set.num_particles(); ++n)
        for (std::size_t i = 0; i < set.particles[n].size(); ++i)
            CHECK(out.particles[n][i].value().data == set.particles[n][i].value().data);
}

TEST_CASE("adapt with K = 1 equals one direct svgd step") {
    auto p = make_pipeline(1, 1, false, 3);
    auto flat = random_flat(p, 4);
    ParticleSet set = p.set_from(flat);
    ParticleSet via_adapt = adapt(set, p.train_batches, p.params);

    auto q_batch = bdqn::assemble([&] {
        std::vector<const Transition*> ptrs;
        for (const auto& t : p.train_batches[0].q_batch) ptrs.push_back(&t);
        return ptrs;
    }());
    auto demo_batch = bdqn::assemble([&] {
        std::vector<const Transition*> ptrs;
        for (const auto& t : *p.train_batches[0].demo_batch) ptrs.push_back(&t);
        return ptrs;
    }());
    ParticleSet direct = bdqn::svgd_step_differentiable(p.set_from(flat), q_batch, &demo_batch,
                                                        p.params.alpha, p.params.temperature,
                                                        p.params.gamma, p.params.eta);
    for (int n = 0; n < set.num_particles(); ++n)
        for (std::size_t i = 0; i < via_adapt.particles[n].size(); ++i) {
            const auto& a = via_adapt.particles[n][i].value().data;
            const auto& b = direct.particles[n][i].value().data;
            for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == Catch::Approx(b[k]).margin(1e-15));
        }
}

TEST_CASE("leader is gradient-stopped and matches adapt values") {
    auto p = make_pipeline(1, 1, false, 5);
    auto flat = random_flat(p, 6);
    ParticleSet chaser = adapt(p.set_from(flat), p.train_batches, p.params);

    // S = 0: leader equals chaser, chaser loss 0
    ParticleSet lead0 = leader(chaser, {}, p.params);
    CHECK(chaser_loss(chaser, lead0).scalar() == 0.0);

    ParticleSet lead = leader(chaser, p.val_batches, p.params);
    for (const auto& particle : lead.particles)
        for (const auto& w : particle) CHECK_FALSE(w.requires_grad());  // stopgrad contract

    // same update rule: leader(S=1) values equal adapt(chaser, K=1) on the same batch
    ParticleSet via_adapt = adapt(chaser.detached(), p.val_batches, p.params);
    for (int n = 0; n < lead.num_particles(); ++n)
        for (std::size_t i = 0; i < lead.particles[n].size(); ++i) {
            const auto& a = lead.particles[n][i].value().data;
            const auto& b = via_adapt.particles[n][i].value().data;
            for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == Catch::Approx(b[k]).margin(1e-15));
        }
}

TEST_CASE("chaser loss closed forms") {
    qnet::Arch arch{1, 1};
    Rng rng(7);
    auto vals = qnet::init_params(arch, rng);
    ParticleSet a, b;
    a.arch = b.arch = arch;
    a.particles = {qnet::as_leaves(vals)};
    b.particles = {qnet::as_leaves(vals)};
    CHECK(chaser_loss(a, b).scalar() == 0.0);

    // 2-parameter particles differing by (1, 2): loss 5
    ParticleSet c, d;
    c.arch = d.arch = arch;
    c.particles = {{ad::Var::leaf(Tensor::column({0.0, 0.0}))}};
    d.particles = {{ad::Var::leaf(Tensor::column({1.0, 2.0}))}};
    CHECK(chaser_loss(c, d).scalar() == Catch::Approx(5.0));
    CHECK(chaser_loss(d, c).scalar() == Catch::Approx(5.0));  // symmetric in values
    CHECK(chaser_loss(c, d).scalar() >= 0.0);

    ParticleSet two = c;
    two.particles.push_back({ad::Var::leaf(Tensor::column({0.0, 0.0}))});
    CHECK_THROWS_AS(chaser_loss(two, d), ValueError);
}

TEST_CASE("exact meta-gradient matches finite differences through K=2, S=1") {
    auto p = make_pipeline(2, 1, false, 11);
    auto flat = random_flat(p, 12);
    auto got = exact_meta_grad(p, flat);

    // freeze the stop-gradient leader at the base point, then FD the chaser path
    ParticleSet base_chaser = adapt(p.set_from(flat), p.train_batches, p.params);
    ParticleSet frozen_leader = leader(base_chaser, p.val_batches, p.params);
    auto fd = fsaf::testing::finite_diff(
        [&](const std::vector<double>& x) { return p.loss_value_frozen_leader(x, frozen_leader); }, flat,
        1e-5);
    REQUIRE(got.size() == fd.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        double denom = std::max(std::abs(fd[i]), 1e-4);
        worst = std::max(worst, std::abs(got[i] - fd[i]) / denom);
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("first-order and exact meta-gradients agree in direction (K=1)") {
    auto exact_p = make_pipeline(1, 1, false, 13);
    auto fo_p = make_pipeline(1, 1, true, 13);  // same batches (same seed)
    auto flat = random_flat(exact_p, 14);
    auto exact = exact_meta_grad(exact_p, flat);
    auto fo = exact_meta_grad(fo_p, flat);
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
        dot += exact[i] * fo[i];
        na += exact[i] * exact[i];
        nb += fo[i] * fo[i];
    }
    CHECK(dot / std::sqrt(na * nb) > 0.5);
}

TEST_CASE("apply_meta_gradient") {
    qnet::Arch arch{1, 1};
    Rng rng(17);
    ParticleSet set = ParticleSet::init(arch, 2, rng);
    auto before = set.particle_values();

    // beta = 0 leaves parameters unchanged
    ad::Var loss = chaser_loss(set, set.detached());
    ParticleSet out0 = apply_meta_gradient(set, {loss}, {"t"}, 0.0);
    auto after0 = out0.particle_values();
    for (int n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < before[n].size(); ++i) CHECK(after0[n][i].data == before[n][i].data);

    // zero losses (chaser == leader) leave parameters unchanged at any beta
    ParticleSet out1 = apply_meta_gradient(set, {loss}, {"t"}, 0.5);
    auto after1 = out1.particle_values();
    for (int n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < before[n].size(); ++i) CHECK(after1[n][i].data == before[n][i].data);
}

TEST_CASE("select_checkpoint") {
    TrainLog log;
    log.records.push_back({0, 3.0, 0, 0, {}});
    CHECK(select_checkpoint(log) == 0);  // single entry
    log.records.push_back({1, 5.0, 0, 0, {}});
    log.records.push_back({2, 4.0, 0, 0, {}});
    CHECK(select_checkpoint(log) == 1);  // argmax of [3, 5, 4]
    log.records.push_back({3, 5.0, 0, 0, {}});
    CHECK(select_checkpoint(log) == 3);  // ties go to the later iteration
    TrainLog rising;
    for (int i = 0; i < 5; ++i) rising.records.push_back({i, static_cast<double>(i), 0, 0, {}});
    CHECK(select_checkpoint(rising) == 4);  // monotone-improving log
    CHECK_THROWS_AS(select_checkpoint(TrainLog{}), ValueError);
}

namespace {

TrainSettings smoke_settings(std::uint64_t seed) {
    TrainSettings s;
    s.arch = qnet::Arch{1, 8};
    s.num_particles = 2;
    s.adapt_steps = 2;
    s.leader_steps = 1;
    s.batch_size = 16;
    s.iterations = 3;
    s.task_batch_size = 2;
    s.episodes_per_task = 2;
    s.budget = 10;
    s.metric_step = 10;
    s.kappa = 0.5;  // exercise the demo path in a short run
    s.seed = seed;
    env::TaskDefaults d{1, 16, 10, 1e-4};
    for (const auto& t : {"gp_rbf:ell=0.17..0.23", "gp_matern32:ell=0.17..0.23", "gp_rbf:ell=0.27..0.33"})
        s.tasks.push_back(env::parse_task_spec(t, d));
    return s;
}

}  // namespace

TEST_CASE("trainer smoke run: buffers fill, metrics finite, demo buffer grows") {
    Trainer trainer(smoke_settings(99));
    trainer.run();
    const auto& log = trainer.log();
    REQUIRE(log.records.size() == 3);
    for (const auto& rec : log.records) {
        CHECK(std::isfinite(rec.avg_return));
        CHECK(std::isfinite(rec.train_metric));
        CHECK(std::isfinite(rec.meta_loss));
        CHECK(rec.task_returns.size() == 2);
    }
    bool some_q = false, some_demo = false;
    for (std::size_t i = 0; i < 3; ++i) {
        if (trainer.q_buffer(i).size() > 0) some_q = true;
        if (trainer.demo_buffer(i).size() > 0) some_demo = true;
    }
    CHECK(some_q);
    CHECK(some_demo);  // kappa > 0: demo transitions arrive every iteration
}

TEST_CASE("trainer is bit-deterministic under a fixed seed") {
    auto run = [] {
        Trainer t(smoke_settings(123));
        t.run();
        std::vector<double> flat;
        for (const auto& vals : t.particles().particle_values())
            for (const auto& w : vals) flat.insert(flat.end(), w.data.begin(), w.data.end());
        return flat;
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);  // bitwise identical
}
