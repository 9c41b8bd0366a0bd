#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "fsaf/env.hpp"

using namespace fsaf;
using namespace fsaf::env;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct TempCsv {
    std::string path;
    explicit TempCsv(const std::string& content) {
        path = std::string("/tmp/fsaf_test_") + std::to_string(::getpid()) + "_" +
               std::to_string(counter()++) + ".csv";
        std::ofstream out(path);
        out << content;
    }
    ~TempCsv() { std::remove(path.c_str()); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

TaskDefaults desk_defaults() { return TaskDefaults{1, 64, 30, 1e-4}; }

}  // namespace

TEST_CASE("benchmark closed forms before scaling") {
    VectorXd zero2 = VectorXd::Zero(2);
    CHECK(std::abs(ackley_raw(zero2)) < 1e-12);

    VectorXd styb = VectorXd::Constant(2, -2.903534);
    CHECK(styblinski_tang_raw(styb) == Catch::Approx(-39.1661657037714 * 2).epsilon(1e-9));

    VectorXd dp(2);
    dp << 1.0, std::sqrt(0.5);
    CHECK(dixon_price_raw(dp) == Catch::Approx(2.0 * (2.0 * 0.5 - 1.0) * (2.0 * 0.5 - 1.0)).margin(1e-12));

    CHECK_THROWS_AS(benchmark_def("powell", 3), ValueError);
    CHECK_THROWS_AS(benchmark_def("eggholder", 3), ValueError);
    CHECK_THROWS_AS(benchmark_def("nope", 2), ValueError);
}

TEST_CASE("benchmark scaling spans [-2,2] on the scan grid") {
    for (const char* name : {"ackley", "styblinski_tang", "dixon_price"}) {
        TaskSpec task;
        task.kind = TaskSpec::Kind::Benchmark;
        task.benchmark_name = name;
        task.dim = 2;
        auto box = make_benchmark_blackbox(task);
        CHECK(box.grid_values.minCoeff() == Catch::Approx(-2.0).margin(1e-9));
        CHECK(box.grid_values.maxCoeff() == Catch::Approx(2.0).margin(1e-9));
        CHECK(box.f_star == Catch::Approx(2.0).margin(1e-9));
    }
    // ackley's raw global minimum at the origin maps near the scaled maximum
    auto scaled = benchmark_scaled("ackley", 2);
    CHECK(scaled(VectorXd::Zero(2)) > 1.9);
}

TEST_CASE("augmentation") {
    TaskSpec task;
    task.kind = TaskSpec::Kind::Benchmark;
    task.benchmark_name = "styblinski_tang";
    task.dim = 2;
    task.domain = DomainBox::cube(-5.0, 5.0, 2);

    // identity augmentation leaves values unchanged
    auto base = make_benchmark_blackbox(task);
    TaskSpec ident = task;
    ident.translation = VectorXd::Zero(2);
    ident.y_scale = 1.0;
    auto same = make_benchmark_blackbox(ident);
    VectorXd probe(2);
    probe << 1.3, -2.0;
    CHECK(same.eval(probe) == base.eval(probe));

    // translation shifts the evaluator by exactly the translation vector
    TaskSpec shifted = task;
    shifted.translation = VectorXd(2);
    shifted.translation << 0.25, -0.4;
    auto sbox = make_benchmark_blackbox(shifted);
    CHECK(sbox.eval(probe + shifted.translation) == Catch::Approx(base.eval(probe)).epsilon(1e-12));

    // y-scale multiplies values (and hence regrets for fixed sample sequences)
    TaskSpec scaled = task;
    scaled.translation = VectorXd::Zero(2);
    scaled.y_scale = 1.1;
    auto ybox = make_benchmark_blackbox(scaled);
    CHECK(ybox.eval(probe) == Catch::Approx(1.1 * base.eval(probe)).epsilon(1e-12));
    CHECK(ybox.f_star == Catch::Approx(1.1 * base.f_star).epsilon(1e-12));

    // augment() draws parameters within the stated ranges
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        TaskSpec aug = augment(task, rng);
        for (int j = 0; j < 2; ++j) CHECK(std::abs(aug.translation[j]) <= 0.1 * 5.0);
        CHECK(aug.y_scale >= 0.9);
        CHECK(aug.y_scale <= 1.1);
    }
}

TEST_CASE("gp task construction") {
    Rng rng(7);
    auto task = parse_task_spec("gp_rbf:ell=0.17..0.23", desk_defaults());
    Rng r1 = rng.child({1});
    Rng r2 = rng.child({1});
    auto a = make_blackbox(task, r1);
    auto b = make_blackbox(task, r2);
    CHECK(a.grid_values == b.grid_values);  // same stream, same function
    CHECK(a.f_star == a.grid_values.maxCoeff());
    REQUIRE(a.generating_kernel.has_value());
    CHECK(a.generating_kernel->lengthscale >= 0.17);
    CHECK(a.generating_kernel->lengthscale <= 0.23);

    Rng r3 = rng.child({2});
    auto c = make_blackbox(task, r3);
    CHECK(a.grid_values != c.grid_values);
}

TEST_CASE("csv black-box") {
    TempCsv file("a,b,y\n0,1,1\n0.5,2,2\n1,3,3\n");
    auto box = load_csv_blackbox(file.path, {"a", "b"}, {"y"});
    CHECK(box.grid.rows() == 3);
    CHECK(box.grid_values[0] == Catch::Approx(-2.0));
    CHECK(box.grid_values[1] == Catch::Approx(0.0));
    CHECK(box.grid_values[2] == Catch::Approx(2.0));
    CHECK(box.grid.minCoeff() == 0.0);
    CHECK(box.grid.maxCoeff() == 1.0);
    // noiseless self-lookup
    for (int i = 0; i < 3; ++i)
        CHECK(box.eval(box.grid.row(i).transpose()) == box.grid_values[i]);

    TempCsv dup("a,y\n1,1\n1,5\n2,3\n");
    try {
        load_csv_blackbox(dup.path, {"a"}, {"y"});
        FAIL("expected duplicate-row error");
    } catch (const ValueError& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }

    TempCsv bad("a,y\n1,x\n");
    try {
        load_csv_blackbox(bad.path, {"a"}, {"y"});
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    TempCsv missing("a,y\n1,\n");
    CHECK_THROWS_AS(load_csv_blackbox(missing.path, {"a"}, {"y"}), ParseError);
    CHECK_THROWS_AS(load_csv_blackbox("/nonexistent.csv", {"a"}, {"y"}), IoError);
    CHECK_THROWS_AS(load_csv_blackbox(file.path, {"zz"}, {"y"}), ParseError);
}

TEST_CASE("hierarchical argmax refines toward a smooth peak") {
    DomainBox box = DomainBox::cube(-1.0, 1.0, 2);
    VectorXd target(2);
    target << 0.31, -0.54;
    auto score_fn = [&](const MatrixXd& pts) {
        VectorXd s(pts.rows());
        for (int i = 0; i < pts.rows(); ++i) s[i] = -(pts.row(i).transpose() - target).squaredNorm();
        return s;
    };
    int n_coarse = 400, n_m = 5, n_local = 200;
    auto res = hierarchical_argmax(score_fn, box, n_coarse, n_m, n_local);

    // within twice the local grid spacing of the optimum
    double half_width = 2.0 * std::pow(400.0, -0.5);
    double local_spacing = 2.0 * half_width / std::sqrt(static_cast<double>(n_local));
    CHECK((res.point - target).norm() < 2.0 * local_spacing + 1e-12);

    // never below the best coarse candidate
    MatrixXd coarse = map_to_box(sobol_grid(2, n_coarse), box.lo, box.hi);
    VectorXd cs = score_fn(coarse);
    CHECK(res.score >= cs.maxCoeff());

    DomainBox degenerate;
    degenerate.lo = VectorXd::Zero(2);
    degenerate.hi = VectorXd::Zero(2);
    CHECK_THROWS_AS(hierarchical_argmax(score_fn, degenerate, 10, 2, 10), ValueError);
}

TEST_CASE("episode basics on a gp task") {
    Rng rng(11);
    auto task = parse_task_spec("gp_rbf:ell=0.2", desk_defaults());
    auto box = make_blackbox(task, rng);
    auto surrogate = *box.generating_kernel;

    // T = 1: single random sample, regret = f* - f(x1)
    EiPolicy ei;
    Rng er(1);
    auto one = run_episode(ei, box, 1, surrogate, er);
    REQUIRE(one.curve.steps.size() == 1);
    CHECK(one.curve.steps[0].regret ==
          Catch::Approx(box.f_star - box.grid_values[one.curve.steps[0].action_index]).margin(1e-12));
    CHECK(one.transitions.empty());

    // full episode: regret non-increasing and non-negative; best = running max y
    Rng er2(2);
    EpisodeOptions opts;
    opts.record_transitions = true;
    auto full = run_episode(ei, box, 30, surrogate, er2, opts);
    REQUIRE(full.curve.steps.size() == 30);
    double best = -1e300, prev_regret = 1e300;
    for (const auto& s : full.curve.steps) {
        best = std::max(best, s.y);
        CHECK(s.best == best);
        CHECK(s.regret >= 0.0);
        CHECK(s.regret <= prev_regret + 1e-12);
        prev_regret = s.regret;
    }
    CHECK(full.transitions.size() == 29);
    CHECK(full.transitions.back().terminal);
    for (std::size_t i = 0; i + 1 < full.transitions.size(); ++i) {
        CHECK_FALSE(full.transitions[i].terminal);
        CHECK(full.transitions[i].s_next.rows == full.transitions[i + 1].s.rows);
    }
}

TEST_CASE("an oracle policy drives regret to zero from step 2") {
    Rng rng(13);
    auto task = parse_task_spec("gp_rbf:ell=0.2", desk_defaults());
    auto box = make_blackbox(task, rng);

    // scores the known argmax highest
    class OraclePolicy : public AcquisitionPolicy {
    public:
        explicit OraclePolicy(int best) : best_(best) {}
        std::string name() const override { return "oracle"; }
        std::vector<double> scores(const GpPosterior& post, const StepContext&) override {
            std::vector<double> s(post.size(), 0.0);
            s[best_] = 1.0;
            return s;
        }

    private:
        int best_;
    };
    Eigen::Index best_idx;
    box.grid_values.maxCoeff(&best_idx);
    OraclePolicy oracle(static_cast<int>(best_idx));
    Rng er(3);
    auto res = run_episode(oracle, box, 5, *box.generating_kernel, er);
    for (std::size_t i = 1; i < res.curve.steps.size(); ++i) CHECK(res.curve.steps[i].regret == 0.0);
}

TEST_CASE("EI beats random on gp tasks (median over 50 seeds)") {
    auto task = parse_task_spec("gp_rbf:ell=0.17..0.23", desk_defaults());
    std::vector<double> ei_regret, rnd_regret;
    for (int seed = 0; seed < 50; ++seed) {
        Rng fn_rng(derive_seed(900, {static_cast<std::uint64_t>(seed)}));
        auto box = make_blackbox(task, fn_rng);
        auto surrogate = *box.generating_kernel;
        EiPolicy ei;
        RandomPolicy rnd;
        Rng e1(derive_seed(901, {static_cast<std::uint64_t>(seed)}));
        Rng e2(derive_seed(901, {static_cast<std::uint64_t>(seed)}));
        ei_regret.push_back(run_episode(ei, box, 30, surrogate, e1).curve.final_regret());
        rnd_regret.push_back(run_episode(rnd, box, 30, surrogate, e2).curve.final_regret());
    }
    std::sort(ei_regret.begin(), ei_regret.end());
    std::sort(rnd_regret.begin(), rnd_regret.end());
    double ei_med = 0.5 * (ei_regret[24] + ei_regret[25]);
    double rnd_med = 0.5 * (rnd_regret[24] + rnd_regret[25]);
    CHECK(ei_med < rnd_med);
}

TEST_CASE("reward function") {
    CHECK(reward_from_regret(1.0) == 0.0);
    CHECK(reward_from_regret(0.0) == Catch::Approx(-std::log(1e-10)));
    CHECK(std::isfinite(reward_from_regret(0.0)));
    // strictly decreasing above the floor
    double prev = reward_from_regret(1e-9);
    for (double z : {1e-6, 1e-3, 0.1, 1.0, 3.0}) {
        double r = reward_from_regret(z);
        CHECK(r < prev);
        prev = r;
    }
}

TEST_CASE("task spec parsing") {
    auto defaults = desk_defaults();
    auto rbf = parse_task_spec("gp_rbf:ell=0.07..0.13", defaults);
    CHECK(rbf.kind == TaskSpec::Kind::Gp);
    CHECK(rbf.kernel.kind == gp::KernelKind::Rbf);
    CHECK(rbf.kernel.ell_lo == 0.07);
    CHECK(rbf.kernel.ell_hi == 0.13);
    CHECK(rbf.dim == 1);
    CHECK(rbf.grid_size == 64);

    auto sm = parse_task_spec("gp_sm:ell=0.47..0.53:periods=0.3/0.6:d=3:grid=200", defaults);
    CHECK(sm.kernel.kind == gp::KernelKind::SpectralMixture);
    REQUIRE(sm.kernel.components.size() == 2);
    CHECK(sm.kernel.components[0].period == 0.3);
    CHECK(sm.kernel.components[1].period == 0.6);
    CHECK(sm.dim == 3);
    CHECK(sm.grid_size == 200);

    auto ack = parse_task_spec("ackley", defaults);
    CHECK(ack.kind == TaskSpec::Kind::Benchmark);
    CHECK(ack.dim == 2);
    CHECK(ack.domain.lo[0] == -5.0);

    auto pw = parse_task_spec("powell", defaults);
    CHECK(pw.dim == 10);

    auto csv = parse_task_spec("csv:path=/tmp/x.csv:features=a+b:objective=y", defaults);
    CHECK(csv.kind == TaskSpec::Kind::Csv);
    CHECK(csv.feature_cols == std::vector<std::string>{"a", "b"});

    CHECK_THROWS_AS(parse_task_spec("gp_rbf", defaults), ParseError);
    CHECK_THROWS_AS(parse_task_spec("gp_rbf:ell=0.1:bogus=1", defaults), ParseError);
    CHECK(default_training_tasks().size() == 9);
    for (const auto& t : default_training_tasks()) CHECK_NOTHROW(parse_task_spec(t, defaults));
}

TEST_CASE("continuous episode with hierarchical gridding") {
    TaskSpec task = parse_task_spec("styblinski_tang", desk_defaults());
    auto box = make_benchmark_blackbox(task);
    gp::KernelSpec surrogate;
    surrogate.kind = gp::KernelKind::Rbf;
    surrogate.lengthscale = 1.5;

    EiPolicy ei;
    Rng rng(21);
    EpisodeOptions opts;
    opts.n_coarse = 300;
    opts.n_m = 3;
    opts.n_local = 100;
    auto res = run_episode(ei, box, 8, surrogate, rng, opts);
    REQUIRE(res.curve.steps.size() == 8);
    for (const auto& s : res.curve.steps) {
        CHECK(s.regret >= 0.0);
        CHECK(std::isfinite(s.reward));
    }
    CHECK(res.curve.steps.back().regret <= res.curve.steps.front().regret);

    opts.record_transitions = true;
    CHECK_THROWS_AS(run_episode(ei, box, 5, surrogate, rng, opts), ValueError);
}
