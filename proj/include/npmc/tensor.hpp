#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "npmc/errors.hpp"

namespace npmc {

// Dense row-major 2-D tensor of doubles.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> vals) {
        Tensor t;
        t.rows = vals.size();
        t.cols = t.rows ? vals.begin()->size() : 0;
        t.data.reserve(t.rows * t.cols);
        for (const auto& row : vals) {
            if (row.size() != t.cols) throw DimensionError("from_rows: ragged rows");
            t.data.insert(t.data.end(), row.begin(), row.end());
        }
        return t;
    }

    static Tensor row_vector(const std::vector<double>& v) {
        Tensor t(1, v.size());
        t.data = v;
        return t;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return rows * cols; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const {
        return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
    }
};

inline void require_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace npmc
