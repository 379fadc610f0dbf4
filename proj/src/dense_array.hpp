// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace coqg {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

// Row-major array of doubles. Rank 1 and rank 2 are what the networks use;
// other ranks are carried through reshape and softmax only.
class DenseArray {
public:
    DenseArray() = default;
    explicit DenseArray(Shape shape, double fill = 0.0);
    DenseArray(Shape shape, std::vector<double> data);

    static DenseArray scalar(double v) { return DenseArray({1}, std::vector<double>{v}); }
    static DenseArray matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Leading extent and product of the rest; a rank-1 array is one row.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    void fill(double v);
    void reshape(Shape shape);
    bool all_finite() const;

    friend bool operator==(const DenseArray&, const DenseArray&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Dense kernels over raw row-major buffers. All of them accumulate into the
// output (out += ...), so callers zero first when they need plain products.
namespace kernels {

// out[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n);
// out[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n);
// out[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n);

void transpose(const double* a, double* out, std::size_t rows, std::size_t cols);

}  // namespace kernels

}  // namespace coqg
