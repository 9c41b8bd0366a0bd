// tensor.hpp - dense 2-D row-major double tensor backing the autodiff engine
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "fsaf/util.hpp"

namespace fsaf {

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMatrix>;
using ECMap = Eigen::Map<const EMatrix>;

/// Dense real array. Scalars are 1x1, vectors n x 1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    Tensor(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != static_cast<std::size_t>(r) * c)
            throw ShapeError("Tensor: data size does not match " + std::to_string(r) + "x" + std::to_string(c));
    }

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor ones(int r, int c) {
        Tensor t(r, c);
        std::fill(t.data.begin(), t.data.end(), 1.0);
        return t;
    }
    static Tensor full(int r, int c, double v) {
        Tensor t(r, c);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor(1, 1, {v}); }
    static Tensor column(std::vector<double> v) {
        int n = static_cast<int>(v.size());
        return Tensor(n, 1, std::move(v));
    }
    static Tensor row(std::vector<double> v) {
        int n = static_cast<int>(v.size());
        return Tensor(1, n, std::move(v));
    }

    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    double value() const {
        if (!is_scalar()) throw ShapeError("Tensor::value: not a scalar");
        return data[0];
    }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

    EMap map() { return EMap(data.data(), rows, cols); }
    ECMap map() const { return ECMap(data.data(), rows, cols); }

    bool has_nan() const {
        for (double v : data)
            if (std::isnan(v)) return true;
        return false;
    }
};

}  // namespace fsaf
