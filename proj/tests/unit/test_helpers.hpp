// Shared test utilities: finite-difference oracles and small helpers.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fsaf/autodiff.hpp"
#include "fsaf/tensor.hpp"

namespace fsaf::testing {

/// Central finite differences of a scalar function of flat parameters.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double orig = x[i];
        x[i] = orig + h;
        double fp = f(x);
        x[i] = orig - h;
        double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double rel_err(double got, double want) {
    double denom = std::max(std::abs(want), 1e-8);
    return std::abs(got - want) / denom;
}

/// Max relative error between two vectors, with an absolute floor for tiny entries.
inline double max_rel_err(const std::vector<double>& got, const std::vector<double>& want,
                          double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        double denom = std::max(std::abs(want[i]), floor);
        worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
    return worst;
}

}  // namespace fsaf::testing
