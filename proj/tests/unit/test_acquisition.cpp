#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "fsaf/acquisition.hpp"
#include "fsaf/util.hpp"

using namespace fsaf;
using namespace fsaf::af;
using Eigen::VectorXd;

namespace {

GpPosterior make_post(std::vector<double> mu, std::vector<double> sigma) {
    GpPosterior p;
    p.mean = Eigen::Map<VectorXd>(mu.data(), mu.size());
    p.std = Eigen::Map<VectorXd>(sigma.data(), sigma.size());
    return p;
}

}  // namespace

TEST_CASE("EI closed-form values") {
    auto p = make_post({1.0}, {1.0});
    CHECK(ei(p, 1.0).scores[0] == Catch::Approx(0.3989422804014327).epsilon(1e-9));

    auto deg = make_post({0.5, 2.0}, {0.0, 0.0});
    auto s = ei(deg, 1.0);
    CHECK(s.scores[0] == 0.0);
    CHECK(s.scores[1] == Catch::Approx(1.0));

    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        auto q = make_post({rng.normal()}, {std::abs(rng.normal())});
        CHECK(ei(q, rng.normal()).scores[0] >= 0.0);
    }
}

TEST_CASE("PI closed-form values") {
    auto p = make_post({1.0}, {0.5});
    CHECK(pi(p, 1.0).scores[0] == Catch::Approx(0.5));

    auto q = make_post({1.0 + 1.96 * 0.5}, {0.5});
    CHECK(pi(q, 1.0).scores[0] == Catch::Approx(0.9750021048517795).epsilon(1e-9));

    auto deg = make_post({0.5}, {0.0});
    CHECK(pi(deg, 1.0).scores[0] == 0.0);
}

TEST_CASE("EI and PI match Monte-Carlo estimates") {
    Rng rng(1234);
    for (int rep = 0; rep < 20; ++rep) {
        double mu = rng.uniform(-2, 2);
        double sigma = rng.uniform(0.05, 2.0);
        double y_best = rng.uniform(-2, 2);
        auto p = make_post({mu}, {sigma});
        double ei_val = ei(p, y_best).scores[0];
        double pi_val = pi(p, y_best).scores[0];

        const int n = 1000000;
        double acc_ei = 0.0;
        long acc_pi = 0;
        for (int i = 0; i < n; ++i) {
            double f = mu + sigma * rng.normal();
            acc_ei += std::max(f - y_best, 0.0);
            acc_pi += (f > y_best) ? 1 : 0;
        }
        CHECK(std::abs(ei_val - acc_ei / n) < 1e-2);
        CHECK(std::abs(pi_val - static_cast<double>(acc_pi) / n) < 1e-2);
    }
}

TEST_CASE("EI/PI argmax invariant to constant shifts") {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        int m = 2 + static_cast<int>(rng.uniform_index(8));
        std::vector<double> mu(m), sd(m);
        for (int i = 0; i < m; ++i) {
            mu[i] = rng.normal();
            sd[i] = rng.uniform(0.05, 1.5);
        }
        double y_best = rng.normal();
        double c = rng.uniform(-5, 5);
        auto base = make_post(mu, sd);
        std::vector<double> mu_shift = mu;
        for (auto& v : mu_shift) v += c;
        auto shifted = make_post(mu_shift, sd);
        CHECK(ei(base, y_best).argmax == ei(shifted, y_best + c).argmax);
        CHECK(pi(base, y_best).argmax == pi(shifted, y_best + c).argmax);
    }
}

TEST_CASE("UCB behavior") {
    auto p = make_post({1.0, 0.5, 0.2}, {0.0, 0.0, 0.0});
    CHECK(ucb(p, 2.0).argmax == 0);  // pure mean argmax when sigma = 0

    auto q = make_post({1.0, 0.5}, {0.1, 0.9});
    auto s0 = ucb(q, 0.0);
    CHECK(s0.scores[0] == Catch::Approx(1.0));
    CHECK(s0.scores[1] == Catch::Approx(0.5));

    // exploitation point wins at small beta, exploration point at large beta,
    // and the switch is monotone in beta on a 2-point grid
    bool seen_explore = false;
    for (double beta : {0.0, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0}) {
        auto s = ucb(q, beta);
        if (s.argmax == 1) seen_explore = true;
        if (seen_explore) CHECK(s.argmax == 1);
    }
    CHECK(seen_explore);

    CHECK_THROWS_AS(ucb(q, -1.0), ValueError);
    CHECK(ucb_beta(200, 1, 0.01) > 0.0);
    CHECK(ucb_beta(200, 5, 0.01) > ucb_beta(200, 1, 0.01));
    CHECK_THROWS_AS(ucb_beta(200, 1, 0.0), ValueError);
}

TEST_CASE("MES scores") {
    // closed form with a fixed y* above both means: larger sigma scores higher
    double ys = 2.5;
    double lo = mes_point_score(0.0, 1.0, ys);
    double hi = mes_point_score(0.0, 2.0, ys);
    CHECK(hi > lo);
    CHECK(mes_point_score(0.0, 0.0, ys) == 0.0);

    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        int m = 2 + static_cast<int>(rng.uniform_index(6));
        std::vector<double> mu(m), sd(m);
        for (int i = 0; i < m; ++i) {
            mu[i] = rng.normal();
            sd[i] = rng.uniform(0.0, 1.5);
        }
        sd[0] = 0.0;  // always include a degenerate point
        auto p = make_post(mu, sd);
        auto s = mes(p, 0.0, rng);
        CHECK(s.scores[0] == 0.0);
        for (double v : s.scores) CHECK(v >= 0.0);
    }

    // extreme tail stays finite and non-negative
    CHECK(std::isfinite(mes_point_score(100.0, 1.0, -100.0)));
    CHECK(mes_point_score(100.0, 1.0, -100.0) >= 0.0);
}

TEST_CASE("MES Gumbel fit hits the target quantiles") {
    Rng rng(23);
    std::vector<double> mu(20), sd(20);
    for (int i = 0; i < 20; ++i) {
        mu[i] = rng.normal();
        sd[i] = rng.uniform(0.2, 1.0);
    }
    auto p = make_post(mu, sd);
    auto fit = mes_fit_gumbel(p);
    // Gumbel quantile at p must agree with the approximate max CDF quantile
    double y25 = fit.location - fit.scale * std::log(-std::log(0.25));
    double y75 = fit.location - fit.scale * std::log(-std::log(0.75));
    CHECK(approx_max_cdf(p, y25) == Catch::Approx(0.25).margin(1e-6));
    CHECK(approx_max_cdf(p, y75) == Catch::Approx(0.75).margin(1e-6));
}

TEST_CASE("random AF") {
    Rng rng(7);
    auto a = random_af(10, rng);
    Rng rng2(7);
    auto b = random_af(10, rng2);
    CHECK(a.argmax == b.argmax);  // reproducible under the same seed
    for (double v : a.scores) {
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }

    std::vector<int> counts(10, 0);
    Rng rng3(99);
    for (int i = 0; i < 10000; ++i) ++counts[random_af(10, rng3).argmax];
    for (int c : counts) CHECK(std::abs(c / 10000.0 - 0.1) < 0.02);
}
