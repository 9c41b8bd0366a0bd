// sobol.hpp - Sobol low-discrepancy sequence with standard (Joe-Kuo style)
// direction numbers, Gray-code construction, supporting up to 21 dimensions.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fsaf/util.hpp"

namespace fsaf {

namespace sobol_detail {

constexpr int kMaxDim = 21;
constexpr int kBits = 52;  // fits exactly in a double mantissa

struct DimSpec {
    int degree;
    std::uint32_t poly;          // primitive polynomial coefficient bits (a)
    std::uint32_t m[7];          // initial direction integers, m[0..degree-1]
};

// First 21 dimensions of the standard new-Joe-Kuo-6 table; dimension 1 is the
// van der Corput sequence in base 2.
inline const DimSpec* dim_table() {
    static const DimSpec table[kMaxDim] = {
        {1, 0, {1}},                    // d=1 (van der Corput)
        {1, 0, {1}},                    // d=2
        {2, 1, {1, 3}},                 // d=3
        {3, 1, {1, 3, 1}},              // d=4
        {3, 2, {1, 1, 1}},              // d=5
        {4, 1, {1, 1, 3, 3}},           // d=6
        {4, 4, {1, 3, 5, 13}},          // d=7
        {5, 2, {1, 1, 5, 5, 17}},       // d=8
        {5, 4, {1, 1, 5, 5, 5}},        // d=9
        {5, 7, {1, 1, 7, 11, 19}},      // d=10
        {5, 11, {1, 1, 5, 1, 1}},       // d=11
        {5, 13, {1, 1, 1, 3, 11}},      // d=12
        {5, 14, {1, 3, 5, 5, 31}},      // d=13
        {6, 1, {1, 3, 3, 9, 7, 49}},    // d=14
        {6, 13, {1, 1, 1, 15, 21, 21}}, // d=15
        {6, 16, {1, 3, 1, 13, 27, 49}}, // d=16
        {6, 19, {1, 1, 1, 15, 7, 5}},   // d=17
        {6, 22, {1, 3, 1, 15, 13, 25}}, // d=18
        {6, 25, {1, 1, 5, 5, 19, 61}},  // d=19
        {7, 1, {1, 3, 7, 11, 23, 15, 103}},  // d=20
        {7, 4, {1, 3, 7, 13, 13, 15, 69}},   // d=21
    };
    return table;
}

}  // namespace sobol_detail

/// Streaming Sobol sequence in [0,1)^d. The all-zeros point at index 0 is
/// skipped: next() first returns the point of index 1 (0.5 in every coordinate).
class SobolSequence {
public:
    explicit SobolSequence(int dim) : dim_(dim), x_(dim, 0), v_(dim) {
        using namespace sobol_detail;
        if (dim < 1) throw ValueError("SobolSequence: dimension must be >= 1");
        if (dim > kMaxDim)
            throw ValueError("SobolSequence: dimension beyond supported direction-number table (" +
                             std::to_string(kMaxDim) + ")");
        for (int j = 0; j < dim; ++j) {
            auto& v = v_[j];
            v.resize(kBits);
            if (j == 0) {
                // dimension 1: van der Corput, m_k = 1 for all k
                for (int i = 0; i < kBits; ++i) v[i] = 1ULL << (kBits - 1 - i);
                continue;
            }
            const DimSpec& spec = dim_table()[j];
            int s = spec.degree;
            for (int i = 0; i < s; ++i) v[i] = static_cast<std::uint64_t>(spec.m[i]) << (kBits - 1 - i);
            for (int i = s; i < kBits; ++i) {
                std::uint64_t value = v[i - s] ^ (v[i - s] >> s);
                for (int k = 1; k < s; ++k)
                    if ((spec.poly >> (s - 1 - k)) & 1U) value ^= v[i - k];
                v[i] = value;
            }
        }
    }

    int dim() const { return dim_; }

    /// Next point (Gray-code order), written into out[0..dim).
    void next(double* out) {
        // Gray-code step: flip the direction of the lowest zero bit of n.
        std::uint64_t n = index_++;
        int c = 0;
        while (n & 1ULL) {
            n >>= 1;
            ++c;
        }
        for (int j = 0; j < dim_; ++j) {
            x_[j] ^= v_[j][c];
            out[j] = static_cast<double>(x_[j]) * kScale;
        }
    }

private:
    static constexpr double kScale = 1.0 / 4503599627370496.0;  // 2^-52
    int dim_;
    std::uint64_t index_ = 0;
    std::vector<std::uint64_t> x_;
    std::vector<std::vector<std::uint64_t>> v_;
};

/// First n Sobol points (index starting at 1) in [0,1)^d, one point per row.
inline Eigen::MatrixXd sobol_grid(int d, int n) {
    if (n < 1) throw ValueError("sobol_grid: need at least one point");
    SobolSequence seq(d);
    Eigen::MatrixXd pts(n, d);
    std::vector<double> buf(d);
    for (int i = 0; i < n; ++i) {
        seq.next(buf.data());
        for (int j = 0; j < d; ++j) pts(i, j) = buf[j];
    }
    return pts;
}

/// Affine map of unit-cube points into [lo, hi] per dimension.
inline Eigen::MatrixXd map_to_box(const Eigen::MatrixXd& unit_pts, const Eigen::VectorXd& lo,
                                  const Eigen::VectorXd& hi) {
    Eigen::MatrixXd out = unit_pts;
    for (int j = 0; j < out.cols(); ++j)
        out.col(j) = lo[j] + (hi[j] - lo[j]) * unit_pts.col(j).array();
    return out;
}

}  // namespace fsaf
