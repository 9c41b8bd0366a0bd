// acquisition.hpp - classic acquisition functions over a candidate grid:
// EI, PI, GP-UCB, MES (Gumbel sampling), and uniform-random scores.
#pragma once

#include <cmath>
#include <vector>

#include "fsaf/gp.hpp"
#include "fsaf/util.hpp"

namespace fsaf::af {

using gp::GpPosterior;

/// Degenerate-posterior threshold: points with sigma below this are treated
/// as deterministic by all score formulas.
constexpr double kSigmaFloor = 1e-12;

struct AcquisitionScores {
    std::vector<double> scores;
    std::size_t argmax = 0;  // ties broken by lowest index
};

inline std::size_t argmax_lowest(const std::vector<double>& v) {
    if (v.empty()) throw ValueError("argmax over empty score vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

inline AcquisitionScores make_scores(std::vector<double> s) {
    AcquisitionScores out;
    out.argmax = argmax_lowest(s);
    out.scores = std::move(s);
    return out;
}

inline double normal_pdf(double z) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267793994605993438;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.70710678118654752440084436210485); }

inline double normal_logcdf(double z) {
    if (z > -8.0) return std::log(normal_cdf(z));
    // asymptotic tail: log Phi(z) ~ -z^2/2 - log(-z) - log sqrt(2 pi) + log(1 - 1/z^2)
    constexpr double half_log_2pi = 0.91893853320467274178032973640562;
    return -0.5 * z * z - std::log(-z) - half_log_2pi + std::log1p(-1.0 / (z * z));
}

/// Expected improvement over y_best.
inline AcquisitionScores ei(const GpPosterior& post, double y_best) {
    std::vector<double> s(post.size());
    for (int i = 0; i < post.size(); ++i) {
        double mu = post.mean[i], sigma = post.std[i];
        if (sigma < kSigmaFloor) {
            s[i] = std::max(mu - y_best, 0.0);
        } else {
            double z = (mu - y_best) / sigma;
            s[i] = (mu - y_best) * normal_cdf(z) + sigma * normal_pdf(z);
            if (s[i] < 0.0) s[i] = 0.0;  // roundoff in the far-left tail
        }
    }
    return make_scores(std::move(s));
}

/// Probability of improvement.
inline AcquisitionScores pi(const GpPosterior& post, double y_best) {
    std::vector<double> s(post.size());
    for (int i = 0; i < post.size(); ++i) {
        double mu = post.mean[i], sigma = post.std[i];
        s[i] = sigma < kSigmaFloor ? (mu > y_best ? 1.0 : 0.0) : normal_cdf((mu - y_best) / sigma);
    }
    return make_scores(std::move(s));
}

/// GP-UCB beta from the confidence parameter delta on a grid of M points at
/// step t: beta_t = sqrt(2 log(M t^2 pi^2 / (6 delta))).
inline double ucb_beta(std::size_t grid_size, int t, double delta) {
    if (delta <= 0.0) throw ValueError("ucb_beta: delta must be positive");
    if (t < 1) throw ValueError("ucb_beta: step must be >= 1");
    constexpr double pi_sq = 9.8696044010893586188344909998762;
    double arg = static_cast<double>(grid_size) * t * t * pi_sq / (6.0 * delta);
    return std::sqrt(2.0 * std::log(arg));
}

inline AcquisitionScores ucb(const GpPosterior& post, double beta) {
    if (beta < 0.0) throw ValueError("ucb: beta must be non-negative");
    std::vector<double> s(post.size());
    for (int i = 0; i < post.size(); ++i) s[i] = post.mean[i] + beta * post.std[i];
    return make_scores(std::move(s));
}

/// CDF of the approximate max-value distribution: prod_x Phi((y - mu_x)/sigma_x).
inline double approx_max_cdf(const GpPosterior& post, double y) {
    double logp = 0.0;
    for (int i = 0; i < post.size(); ++i) {
        double sigma = std::max(post.std[i], 1e-10);
        logp += normal_logcdf((y - post.mean[i]) / sigma);
    }
    return std::exp(logp);
}

struct GumbelFit {
    double location;
    double scale;
};

/// Fit Gumbel(location, scale) to the approximate max CDF from its 25% and
/// 75% quantiles, found by bisection.
inline GumbelFit mes_fit_gumbel(const GpPosterior& post) {
    if (post.size() < 2) throw ValueError("mes: grid must have at least 2 points");
    double lo = post.mean[0], hi = post.mean[0], smax = 0.0;
    for (int i = 0; i < post.size(); ++i) {
        lo = std::min(lo, post.mean[i]);
        hi = std::max(hi, post.mean[i]);
        smax = std::max(smax, post.std[i]);
    }
    lo -= 12.0 * smax + 1.0;
    hi += 12.0 * smax + 1.0;

    auto quantile = [&](double p) {
        double a = lo, b = hi;
        for (int it = 0; it < 200 && (b - a) > 1e-12 * (std::abs(b) + 1.0); ++it) {
            double mid = 0.5 * (a + b);
            (approx_max_cdf(post, mid) < p ? a : b) = mid;
        }
        return 0.5 * (a + b);
    };

    double y25 = quantile(0.25);
    double y75 = quantile(0.75);
    // y_p = a - b log(-log p)
    constexpr double c25 = 0.32663425997828094;   // log(-log 0.25)
    constexpr double c75 = -1.2458993029887452;   // log(-log 0.75)
    double scale = std::max((y75 - y25) / (c25 - c75), 1e-12);
    double location = y25 + c25 * scale;
    return {location, scale};
}

inline double gumbel_sample(const GumbelFit& fit, Rng& rng) {
    double u = rng.uniform();
    u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
    return fit.location - fit.scale * std::log(-std::log(u));
}

/// MES closed form for one point given the sampled max y*.
inline double mes_point_score(double mu, double sigma, double y_star) {
    if (sigma < kSigmaFloor) return 0.0;
    double g = (y_star - mu) / sigma;
    double score;
    if (g < -8.0) {
        // hazard phi/Phi ~ -g (1 + 1/g^2); the two diverging halves cancel:
        constexpr double half_log_2pi = 0.91893853320467274178032973640562;
        score = std::log(-g) + half_log_2pi - 0.5 + 1.0 / (g * g);
    } else {
        double cdf = normal_cdf(g);
        score = g * normal_pdf(g) / (2.0 * cdf) - normal_logcdf(g);
    }
    return std::max(score, 0.0);
}

/// Max-value entropy search with one Gumbel-sampled y* per call.
inline AcquisitionScores mes(const GpPosterior& post, double /*y_best*/, Rng& rng) {
    GumbelFit fit = mes_fit_gumbel(post);
    double y_star = gumbel_sample(fit, rng);
    std::vector<double> s(post.size());
    for (int i = 0; i < post.size(); ++i) s[i] = mes_point_score(post.mean[i], post.std[i], y_star);
    return make_scores(std::move(s));
}

/// i.i.d. uniform scores in [0,1).
inline AcquisitionScores random_af(std::size_t grid_size, Rng& rng) {
    std::vector<double> s(grid_size);
    for (auto& v : s) v = rng.uniform();
    return make_scores(std::move(s));
}

}  // namespace fsaf::af
