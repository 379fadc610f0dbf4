// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "dense_array.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "errors.hpp"

namespace coqg {

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

namespace {

void check_extents(const Shape& shape) {
    if (shape.empty()) throw DimensionError("array shape must have at least one extent");
    for (std::size_t e : shape) {
        if (e == 0) throw DimensionError("array extents must be positive, got " + to_string(shape));
    }
}

}  // namespace

DenseArray::DenseArray(Shape shape, double fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(element_count(shape_), fill);
}

DenseArray::DenseArray(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (element_count(shape_) != data_.size()) {
        throw DimensionError("shape " + to_string(shape_) + " does not match " + std::to_string(data_.size()) +
                             " values");
    }
}

DenseArray DenseArray::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> data;
    const std::size_t n = rows.begin()->size();
    for (const auto& r : rows) {
        if (r.size() != n) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), r.begin(), r.end());
    }
    return DenseArray({rows.size(), n}, std::move(data));
}

std::size_t DenseArray::rows() const { return shape_.size() == 1 ? 1 : shape_[0]; }

std::size_t DenseArray::cols() const {
    if (shape_.size() == 1) return shape_[0];
    return data_.size() / shape_[0];
}

void DenseArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void DenseArray::reshape(Shape shape) {
    check_extents(shape);
    if (element_count(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    shape_ = std::move(shape);
}

bool DenseArray::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace kernels {

void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* o = out + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = ai[p];
            if (s == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += s * bp[j];
        }
    }
}

void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = ai[p];
            if (s == 0.0) continue;
            double* o = out + p * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += s * bi[j];
        }
    }
}

void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> bt(k * n);
    transpose(b, bt.data(), n, k);
    gemm_nn(a, bt.data(), out, m, k, n);
}

void transpose(const double* a, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
}

}  // namespace kernels

}  // namespace coqg
