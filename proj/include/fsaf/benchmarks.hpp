// benchmarks.hpp - standard global-optimization test functions, negated for
// maximization and affinely rescaled so values on a fixed Sobol scan of the
// domain span [-2, 2].
//
// Domains (hypercubes [-x_lim, x_lim]^d): ackley 5, eggholder 512,
// dixon_price 10, styblinski_tang 5, powell 4. Default dimensions: 2 for all
// but powell (10). Powell uses floor(d/4) four-variable blocks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "fsaf/sobol.hpp"
#include "fsaf/util.hpp"

namespace fsaf::env {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DomainBox {
    VectorXd lo;
    VectorXd hi;

    int dim() const { return static_cast<int>(lo.size()); }

    static DomainBox cube(double lo_v, double hi_v, int d) {
        DomainBox b;
        b.lo = VectorXd::Constant(d, lo_v);
        b.hi = VectorXd::Constant(d, hi_v);
        return b;
    }

    void validate() const {
        if (lo.size() != hi.size() || lo.size() == 0) throw ValueError("DomainBox: bad extents");
        for (int i = 0; i < lo.size(); ++i)
            if (!(lo[i] < hi[i])) throw ValueError("DomainBox: lo >= hi in dimension " + std::to_string(i));
    }
};

inline double ackley_raw(const VectorXd& x) {
    constexpr double a = 20.0, b = 0.2, c = 6.283185307179586476925286766559;
    double sq = 0.0, cs = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        sq += x[i] * x[i];
        cs += std::cos(c * x[i]);
    }
    double n = static_cast<double>(x.size());
    return -a * std::exp(-b * std::sqrt(sq / n)) - std::exp(cs / n) + a + std::exp(1.0);
}

inline double eggholder_raw(const VectorXd& x) {
    if (x.size() != 2) throw ValueError("eggholder: defined for d = 2");
    double x1 = x[0], x2 = x[1];
    return -(x2 + 47.0) * std::sin(std::sqrt(std::abs(x1 / 2.0 + (x2 + 47.0)))) -
           x1 * std::sin(std::sqrt(std::abs(x1 - (x2 + 47.0))));
}

inline double dixon_price_raw(const VectorXd& x) {
    if (x.size() < 2) throw ValueError("dixon_price: needs d >= 2");
    double s = (x[0] - 1.0) * (x[0] - 1.0);
    for (int i = 1; i < x.size(); ++i) {
        double term = 2.0 * x[i] * x[i] - x[i - 1];
        s += (i + 1) * term * term;
    }
    return s;
}

inline double styblinski_tang_raw(const VectorXd& x) {
    double s = 0.0;
    for (int i = 0; i < x.size(); ++i) s += x[i] * x[i] * x[i] * x[i] - 16.0 * x[i] * x[i] + 5.0 * x[i];
    return 0.5 * s;
}

inline double powell_raw(const VectorXd& x) {
    if (x.size() < 4) throw ValueError("powell: needs d >= 4");
    double s = 0.0;
    int blocks = static_cast<int>(x.size()) / 4;
    for (int i = 0; i < blocks; ++i) {
        double x1 = x[4 * i], x2 = x[4 * i + 1], x3 = x[4 * i + 2], x4 = x[4 * i + 3];
        double t1 = x1 + 10.0 * x2;
        double t2 = x3 - x4;
        double t3 = x2 - 2.0 * x3;
        double t4 = x1 - x4;
        s += t1 * t1 + 5.0 * t2 * t2 + t3 * t3 * t3 * t3 + 10.0 * t4 * t4 * t4 * t4;
    }
    return s;
}

struct BenchmarkDef {
    std::function<double(const VectorXd&)> raw;
    DomainBox domain;
    int default_dim;
};

inline BenchmarkDef benchmark_def(const std::string& name, int d) {
    if (name == "ackley") {
        if (d < 1) throw ValueError("ackley: bad dimension");
        return {ackley_raw, DomainBox::cube(-5.0, 5.0, d), 2};
    }
    if (name == "eggholder") {
        if (d != 2) throw ValueError("eggholder: fixed at d = 2");
        return {eggholder_raw, DomainBox::cube(-512.0, 512.0, 2), 2};
    }
    if (name == "dixon_price") {
        if (d < 2) throw ValueError("dixon_price: needs d >= 2");
        return {dixon_price_raw, DomainBox::cube(-10.0, 10.0, d), 2};
    }
    if (name == "styblinski_tang") {
        if (d < 1) throw ValueError("styblinski_tang: bad dimension");
        return {styblinski_tang_raw, DomainBox::cube(-5.0, 5.0, d), 2};
    }
    if (name == "powell") {
        if (d < 4) throw ValueError("powell: needs d >= 4");
        return {powell_raw, DomainBox::cube(-4.0, 4.0, d), 10};
    }
    throw ValueError("unknown benchmark function: " + name);
}

inline int benchmark_default_dim(const std::string& name) {
    return name == "powell" ? 10 : 2;
}

/// Affine map z -> [-2, 2] based on the extremes of -raw over a fixed
/// 2^15-point Sobol scan of the domain; constants cached per (name, d).
struct BenchmarkScaling {
    double z_min, z_max;

    double apply(double z) const { return -2.0 + 4.0 * (z - z_min) / (z_max - z_min); }
};

inline const MatrixXd& benchmark_scan_grid(const std::string& name, int d) {
    static std::map<std::string, MatrixXd> cache;
    std::string key = name + ":" + std::to_string(d);
    auto it = cache.find(key);
    if (it == cache.end()) {
        auto def = benchmark_def(name, d);
        it = cache.emplace(key, map_to_box(sobol_grid(d, 1 << 15), def.domain.lo, def.domain.hi)).first;
    }
    return it->second;
}

inline const BenchmarkScaling& benchmark_scaling(const std::string& name, int d) {
    static std::map<std::string, BenchmarkScaling> cache;
    std::string key = name + ":" + std::to_string(d);
    auto it = cache.find(key);
    if (it == cache.end()) {
        auto def = benchmark_def(name, d);
        const MatrixXd& scan = benchmark_scan_grid(name, d);
        double z_min = std::numeric_limits<double>::infinity();
        double z_max = -z_min;
        for (int i = 0; i < scan.rows(); ++i) {
            double z = -def.raw(scan.row(i).transpose());
            z_min = std::min(z_min, z);
            z_max = std::max(z_max, z);
        }
        if (!(z_max > z_min)) throw ValueError("benchmark_scaling: constant function on scan grid");
        it = cache.emplace(key, BenchmarkScaling{z_min, z_max}).first;
    }
    return it->second;
}

/// Scaled maximization target: values on the scan grid span exactly [-2, 2].
inline std::function<double(const VectorXd&)> benchmark_scaled(const std::string& name, int d) {
    auto def = benchmark_def(name, d);
    auto scaling = benchmark_scaling(name, d);
    auto raw = def.raw;
    return [raw, scaling](const VectorXd& x) { return scaling.apply(-raw(x)); };
}

}  // namespace fsaf::env
