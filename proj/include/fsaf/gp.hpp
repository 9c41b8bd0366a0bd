// gp.hpp - Gaussian process machinery: kernels, exact posterior inference on a
// candidate set, marginal-likelihood lengthscale fitting, and prior sampling.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fsaf/util.hpp"

namespace fsaf::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class KernelKind { Rbf, Matern32, SpectralMixture };

inline std::string kernel_kind_name(KernelKind k) {
    switch (k) {
        case KernelKind::Rbf: return "rbf";
        case KernelKind::Matern32: return "matern32";
        case KernelKind::SpectralMixture: return "sm";
    }
    return "?";
}

struct SmComponent {
    double weight = 0.5;
    double period = 0.3;      // mean frequency is 1/period
    double lengthscale = 0.3;
};

struct KernelSpec {
    KernelKind kind = KernelKind::Rbf;
    double lengthscale = 0.2;       // isotropic; used by Rbf and Matern32
    double signal_variance = 1.0;   // sigma_f^2
    std::vector<SmComponent> components;  // SpectralMixture only

    // Range [ell_lo, ell_hi] used when sampling task functions; a concrete
    // spec has ell_lo == ell_hi == lengthscale.
    double ell_lo = 0.0;
    double ell_hi = 0.0;

    void validate() const {
        if (signal_variance <= 0.0) throw ValueError("KernelSpec: signal variance must be positive");
        if (kind == KernelKind::SpectralMixture) {
            if (components.empty()) throw ValueError("KernelSpec: spectral mixture needs components");
            for (const auto& c : components) {
                if (c.weight <= 0.0 || c.period <= 0.0 || c.lengthscale <= 0.0)
                    throw ValueError("KernelSpec: spectral mixture parameters must be positive");
            }
        } else {
            if (lengthscale <= 0.0) throw ValueError("KernelSpec: lengthscale must be positive");
        }
    }

    /// Copy with normalized spectral-mixture weights (sum to 1).
    KernelSpec normalized() const {
        KernelSpec s = *this;
        if (kind == KernelKind::SpectralMixture && !s.components.empty()) {
            double total = 0.0;
            for (const auto& c : s.components) total += c.weight;
            for (auto& c : s.components) c.weight /= total;
        }
        return s;
    }

    /// Concrete spec with a drawn lengthscale when a sampling range is set.
    KernelSpec sample_lengthscale(Rng& rng) const {
        KernelSpec s = *this;
        if (ell_hi > ell_lo) {
            double ell = rng.uniform(ell_lo, ell_hi);
            s.lengthscale = ell;
            for (auto& c : s.components) c.lengthscale = ell;
            s.ell_lo = s.ell_hi = ell;
        }
        return s;
    }
};

struct Dataset {
    MatrixXd X;               // n x d
    VectorXd y;               // n
    double noise_variance = 1e-4;

    int size() const { return static_cast<int>(X.rows()); }
    int dim() const { return static_cast<int>(X.cols()); }
};

struct GpPosterior {
    VectorXd mean;
    VectorXd std;  // >= 0 everywhere

    int size() const { return static_cast<int>(mean.size()); }
};

namespace detail {

inline double kernel_1d_sm(double r, const std::vector<SmComponent>& comps) {
    // One dimension of the spectral-mixture kernel:
    //   sum_q w_q * exp(-2 pi^2 r^2 / ell_q^2) * cos(2 pi r / p_q)
    constexpr double two_pi = 6.283185307179586476925286766559;
    constexpr double two_pi_sq = 19.739208802178717237668981999752;
    double s = 0.0;
    for (const auto& c : comps)
        s += c.weight * std::exp(-two_pi_sq * r * r / (c.lengthscale * c.lengthscale)) *
             std::cos(two_pi * r / c.period);
    return s;
}

inline double kernel_value(const KernelSpec& spec, const double* a, const double* b, int d) {
    switch (spec.kind) {
        case KernelKind::Rbf: {
            double r2 = 0.0;
            for (int k = 0; k < d; ++k) {
                double diff = a[k] - b[k];
                r2 += diff * diff;
            }
            return spec.signal_variance * std::exp(-0.5 * r2 / (spec.lengthscale * spec.lengthscale));
        }
        case KernelKind::Matern32: {
            double r2 = 0.0;
            for (int k = 0; k < d; ++k) {
                double diff = a[k] - b[k];
                r2 += diff * diff;
            }
            constexpr double sqrt3 = 1.7320508075688772935274463415059;
            double u = sqrt3 * std::sqrt(r2) / spec.lengthscale;
            return spec.signal_variance * (1.0 + u) * std::exp(-u);
        }
        case KernelKind::SpectralMixture: {
            double prod = 1.0;
            for (int k = 0; k < d; ++k) prod *= kernel_1d_sm(a[k] - b[k], spec.components);
            return spec.signal_variance * prod;
        }
    }
    return 0.0;
}

/// Cholesky of K with an escalating jitter schedule on the diagonal:
/// 1e-10, then x10 per retry up to 1e-4.
inline Eigen::LLT<MatrixXd> cholesky_with_jitter(MatrixXd K) {
    Eigen::LLT<MatrixXd> llt(K);
    if (llt.info() == Eigen::Success) return llt;
    for (double jitter = 1e-10; jitter <= 1e-4 * 1.0000001; jitter *= 10.0) {
        MatrixXd Kj = K + jitter * MatrixXd::Identity(K.rows(), K.cols());
        llt.compute(Kj);
        if (llt.info() == Eigen::Success) return llt;
    }
    throw ConditioningError("gp: Cholesky failed after max jitter 1e-4");
}

}  // namespace detail

/// K[i][j] = k(a_i, b_j). Rows of A/B are points.
inline MatrixXd kernel_matrix(const KernelSpec& spec_in, const MatrixXd& A, const MatrixXd& B) {
    if (A.cols() != B.cols())
        throw ShapeError("kernel_matrix: dimension mismatch " + std::to_string(A.cols()) + " vs " +
                         std::to_string(B.cols()));
    KernelSpec spec = spec_in.normalized();
    spec.validate();
    int d = static_cast<int>(A.cols());
    MatrixXd K(A.rows(), B.rows());
    // row-major copies so kernel_value can walk raw points
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Ar = A, Br = B;
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < B.rows(); ++j)
            K(i, j) = detail::kernel_value(spec, Ar.row(i).data(), Br.row(j).data(), d);
    return K;
}

/// Exact GP regression posterior at the query points.
inline GpPosterior posterior(const Dataset& data, const KernelSpec& spec, const MatrixXd& query) {
    GpPosterior post;
    int m = static_cast<int>(query.rows());
    if (data.size() == 0) {
        post.mean = VectorXd::Zero(m);
        post.std = VectorXd::Constant(m, std::sqrt(spec.signal_variance));
        return post;
    }
    MatrixXd K = kernel_matrix(spec, data.X, data.X);
    K.diagonal().array() += data.noise_variance;
    auto llt = detail::cholesky_with_jitter(std::move(K));

    MatrixXd Ks = kernel_matrix(spec, data.X, query);  // n x m
    VectorXd alpha = llt.solve(data.y);
    post.mean = Ks.transpose() * alpha;

    MatrixXd V = llt.matrixL().solve(Ks);  // L^{-1} Ks
    post.std = VectorXd(m);
    for (int j = 0; j < m; ++j) {
        double var = spec.signal_variance - V.col(j).squaredNorm();
        // clamp at 0; variances at solver-noise scale (exact interpolation of a
        // noiseless observation) collapse to exactly 0
        if (var < 1e-13 * spec.signal_variance) var = 0.0;
        post.std[j] = std::sqrt(var);
    }
    return post;
}

/// log p(y | X, spec), the standard GP evidence.
inline double log_marginal_likelihood(const Dataset& data, const KernelSpec& spec) {
    if (data.size() == 0) throw ValueError("log_marginal_likelihood: empty dataset");
    MatrixXd K = kernel_matrix(spec, data.X, data.X);
    K.diagonal().array() += data.noise_variance;
    auto llt = detail::cholesky_with_jitter(std::move(K));
    VectorXd alpha = llt.solve(data.y);
    double logdet = 0.0;
    for (int i = 0; i < data.size(); ++i) logdet += std::log(llt.matrixL()(i, i));
    constexpr double half_log_2pi = 0.91893853320467274178032973640562;
    return -0.5 * data.y.dot(alpha) - logdet - data.size() * half_log_2pi;
}

/// Maximum-marginal-likelihood lengthscale over a 50-point log grid on
/// [0.01, 1.0], noise variance pinned to 1e-4 while fitting. Ties break
/// toward the larger lengthscale.
inline KernelSpec fit_lengthscale(const Dataset& data, KernelKind kind) {
    if (data.size() == 0) throw ValueError("fit_lengthscale: empty dataset");
    Dataset fit_data = data;
    fit_data.noise_variance = 1e-4;

    auto spec_for = [&](double ell) {
        KernelSpec s;
        s.kind = kind;
        s.lengthscale = ell;
        if (kind == KernelKind::SpectralMixture)
            s.components = {{0.5, 0.3, ell}, {0.5, 0.6, ell}};
        return s;
    };

    constexpr int kGridPoints = 50;
    double best_ell = 0.0;
    double best_lml = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < kGridPoints; ++i) {
        double log_ell = std::log(0.01) + (std::log(1.0) - std::log(0.01)) * i / (kGridPoints - 1);
        double ell = std::exp(log_ell);
        double lml = log_marginal_likelihood(fit_data, spec_for(ell));
        if (lml >= best_lml) {  // >= so equal scores prefer the larger scale
            best_lml = lml;
            best_ell = ell;
        }
    }
    return spec_for(best_ell);
}

/// One draw f ~ N(0, K_grid) on the grid via Cholesky of K_grid (+ jitter).
inline VectorXd sample_prior_function(const KernelSpec& spec, const MatrixXd& grid, Rng& rng) {
    if (grid.rows() == 0) throw ValueError("sample_prior_function: empty grid");
    MatrixXd K = kernel_matrix(spec, grid, grid);
    auto llt = detail::cholesky_with_jitter(std::move(K));
    VectorXd z(grid.rows());
    for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return llt.matrixL() * z;
}

}  // namespace fsaf::gp
