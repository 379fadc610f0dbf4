// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation on a Wengert tape. Nodes are
// appended in evaluation order, so every parent has a smaller index than its
// children and a single reverse sweep is a valid topological traversal.

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "dense_array.hpp"
#include "parameter_store.hpp"

namespace coqg {

class Rng;

namespace ad {

class Tape;

// Lightweight handle to a node; valid for the lifetime of its tape.
struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    const DenseArray& value() const;
    const Shape& shape() const { return value().shape(); }
};

class Tape {
public:
    // A tape built with gradients disabled records no backward rules; all
    // nodes are constants and forward passes cost only their arithmetic.
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(DenseArray value);
    // Differentiable leaf owning its value.
    Var variable(DenseArray value);
    // Leaf that reads the parameter in place; backward() adds its gradient
    // into param.grad when the parameter is trainable.
    Var parameter(Parameter& param);

    using BackwardRule = std::function<void(Tape&, const DenseArray& out_grad)>;
    // Appends a computed node. The rule is dropped when no parent needs a
    // gradient. Throws NumericError on non-finite values.
    Var record(DenseArray value, std::span<const Var> parents, BackwardRule rule, const char* op);
    Var record(DenseArray value, std::initializer_list<Var> parents, BackwardRule rule, const char* op) {
        return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(rule), op);
    }

    const DenseArray& value(std::uint32_t id) const;
    bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
    // Gradient buffer for a node, zero-initialised on first use.
    DenseArray& grad_buffer(std::uint32_t id);
    // Null until backward has produced a gradient for the node.
    const DenseArray* grad(std::uint32_t id) const;
    const DenseArray* grad(Var v) const { return grad(v.id); }

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(root)/d(root) = seed and sweeps the tape once in reverse.
    void backward(Var root, double seed = 1.0);

private:
    struct Node {
        DenseArray value;
        const DenseArray* external = nullptr;
        Parameter* sink = nullptr;
        DenseArray grad;
        BackwardRule rule;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    bool grad_enabled_;
};

// Primitives. Shapes follow [rows x cols] for rank-2 operands.
Var matmul(Var a, Var b);             // [m x k] . [k x n]
Var matmul_nt(Var a, Var b);          // [m x k] . [n x k]^T
Var transpose(Var a);
Var add(Var a, Var b);                // same shape
Var add_row(Var x, Var bias);         // bias [n] broadcast over rows of [m x n]
Var mul(Var a, Var b);                // elementwise
Var scale(Var a, double s);
Var sum(Var a);                       // scalar
Var gelu(Var a);                      // tanh approximation
Var softmax(Var x, std::size_t axis);
Var causal_fill(Var scores, double fill);  // entries (i, j > i) replaced by fill
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var embedding(Var table, std::span<const std::uint32_t> ids);  // rows of table
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var reshape(Var x, Shape shape);
Var dropout(Var x, double rate, Rng& rng);
// Mean over masked-in rows of -log softmax(logits)[row, target].
Var cross_entropy(Var logits, std::span<const std::uint32_t> targets, std::span<const std::uint8_t> mask);

// Plain (non-differentiable) helpers shared with inference code paths.
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
double gelu_value(double x);
void softmax_rows_inplace(DenseArray& x);
void log_softmax_inplace(std::span<double> row);

}  // namespace ad
}  // namespace coqg
