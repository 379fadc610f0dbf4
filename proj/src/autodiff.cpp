// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "errors.hpp"
#include "rng.hpp"

namespace coqg::ad {

const DenseArray& Var::value() const { return tape->value(id); }

Var Tape::constant(DenseArray value) {
    if (!value.all_finite()) throw NumericError("non-finite value in constant");
    nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, {}, false});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::variable(DenseArray value) {
    if (!value.all_finite()) throw NumericError("non-finite value in variable");
    nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, {}, grad_enabled_});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Parameter& param) {
    const bool needs = grad_enabled_ && param.trainable;
    nodes_.push_back(Node{{}, &param.value, needs ? &param : nullptr, {}, {}, needs});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(DenseArray value, std::span<const Var> parents, BackwardRule rule, const char* op) {
    if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
    bool needs = false;
    if (grad_enabled_) {
        for (const Var& p : parents) {
            if (p.tape != this) throw InvalidArgument(std::string(op) + ": operands belong to different tapes");
            needs = needs || nodes_[p.id].requires_grad;
        }
    }
    Node node{std::move(value), nullptr, nullptr, {}, {}, needs};
    if (needs) node.rule = std::move(rule);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const DenseArray& Tape::value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
}

DenseArray& Tape::grad_buffer(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = DenseArray(value(id).shape(), 0.0);
    return n.grad;
}

const DenseArray* Tape::grad(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::backward(Var root, double seed) {
    if (root.tape != this) throw InvalidArgument("backward: root belongs to a different tape");
    if (value(root.id).size() != 1) {
        throw DimensionError("backward requires a scalar root, got shape " + to_string(value(root.id).shape()));
    }
    for (Node& n : nodes_) n.grad = DenseArray();
    if (!nodes_[root.id].requires_grad) return;
    grad_buffer(root.id).fill(seed);
    for (std::uint32_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.rule) n.rule(*this, n.grad);
        if (n.sink) n.sink->accumulate_grad(n.grad);
    }
}

namespace {

void require_rank2(const Var& v, const char* op) {
    if (v.value().rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a rank-2 operand, got " + to_string(v.shape()));
    }
}

// Gradient accumulation target for a parent, or null when it needs none.
DenseArray* target(Tape& t, Var v) { return t.requires_grad(v.id) ? &t.grad_buffer(v.id) : nullptr; }

}  // namespace

Var matmul(Var a, Var b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: inner extents differ, " + to_string(a.shape()) + " . " + to_string(b.shape()));
    }
    DenseArray out({m, n}, 0.0);
    kernels::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
    return a.tape->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const DenseArray& g) {
        if (DenseArray* ga = target(t, a)) kernels::gemm_nt(g.data(), t.value(b.id).data(), ga->data(), m, n, k);
        if (DenseArray* gb = target(t, b)) kernels::gemm_tn(t.value(a.id).data(), g.data(), gb->data(), m, k, n);
    }, "matmul");
}

Var matmul_nt(Var a, Var b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    if (b.shape()[1] != k) {
        throw DimensionError("matmul_nt: inner extents differ, " + to_string(a.shape()) + " . " +
                             to_string(b.shape()) + "^T");
    }
    DenseArray out({m, n}, 0.0);
    kernels::gemm_nt(a.value().data(), b.value().data(), out.data(), m, k, n);
    return a.tape->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const DenseArray& g) {
        if (DenseArray* ga = target(t, a)) kernels::gemm_nn(g.data(), t.value(b.id).data(), ga->data(), m, n, k);
        if (DenseArray* gb = target(t, b)) kernels::gemm_tn(g.data(), t.value(a.id).data(), gb->data(), m, n, k);
    }, "matmul_nt");
}

Var transpose(Var a) {
    require_rank2(a, "transpose");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    DenseArray out({c, r});
    kernels::transpose(a.value().data(), out.data(), r, c);
    return a.tape->record(std::move(out), {a}, [a, r, c](Tape& t, const DenseArray& g) {
        DenseArray* ga = target(t, a);
        if (!ga) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += g[j * r + i];
    }, "transpose");
}

Var add(Var a, Var b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add: shapes differ, " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    DenseArray out = a.value();
    const DenseArray& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const DenseArray& g) {
        for (Var v : {a, b}) {
            if (DenseArray* gv = target(t, v))
                for (std::size_t i = 0; i < g.size(); ++i) (*gv)[i] += g[i];
        }
    }, "add");
}

Var add_row(Var x, Var bias) {
    const std::size_t cols = x.value().cols(), rows = x.value().rows();
    if (bias.value().size() != cols) {
        throw DimensionError("add_row: bias " + to_string(bias.shape()) + " does not match " + to_string(x.shape()));
    }
    DenseArray out = x.value();
    const DenseArray& bv = bias.value();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
    return x.tape->record(std::move(out), {x, bias}, [x, bias, rows, cols](Tape& t, const DenseArray& g) {
        if (DenseArray* gx = target(t, x))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
        if (DenseArray* gb = target(t, bias))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += g[r * cols + c];
    }, "add_row");
}

Var mul(Var a, Var b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mul: shapes differ, " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    DenseArray out = a.value();
    const DenseArray& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const DenseArray& g) {
        if (DenseArray* ga = target(t, a)) {
            const DenseArray& bv = t.value(b.id);
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
        }
        if (DenseArray* gb = target(t, b)) {
            const DenseArray& av = t.value(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
        }
    }, "mul");
}

Var scale(Var a, double s) {
    DenseArray out = a.value();
    for (double& v : out.values()) v *= s;
    return a.tape->record(std::move(out), {a}, [a, s](Tape& t, const DenseArray& g) {
        if (DenseArray* ga = target(t, a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * s;
    }, "scale");
}

Var sum(Var a) {
    double total = 0.0;
    for (double v : a.value().values()) total += v;
    return a.tape->record(DenseArray::scalar(total), {a}, [a](Tape& t, const DenseArray& g) {
        if (DenseArray* ga = target(t, a))
            for (double& v : ga->values()) v += g[0];
    }, "sum");
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

Var gelu(Var a) {
    DenseArray out = a.value();
    for (double& v : out.values()) v = gelu_value(v);
    return a.tape->record(std::move(out), {a}, [a](Tape& t, const DenseArray& g) {
        DenseArray* ga = target(t, a);
        if (!ga) return;
        const DenseArray& x = t.value(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double xi = x[i];
            const double th = std::tanh(kGeluC * (xi + kGeluA * xi * xi * xi));
            const double d = 0.5 * (1.0 + th) + 0.5 * xi * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * xi * xi);
            (*ga)[i] += g[i] * d;
        }
    }, "gelu");
}

void log_softmax_inplace(std::span<double> row) {
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (double& v : row) v -= lse;
}

void softmax_rows_inplace(DenseArray& x) {
    const std::size_t rows = x.rows(), cols = x.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        double* p = x.data() + r * cols;
        const double mx = *std::max_element(p, p + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            p[c] = std::exp(p[c] - mx);
            z += p[c];
        }
        for (std::size_t c = 0; c < cols; ++c) p[c] /= z;
    }
}

Var softmax(Var x, std::size_t axis) {
    const Shape& shape = x.shape();
    if (axis >= shape.size()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + to_string(shape));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t len = shape[axis];

    DenseArray out = x.value();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            double* base = out.data() + o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, base[j * inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                base[j * inner] = std::exp(base[j * inner] - mx);
                z += base[j * inner];
            }
            for (std::size_t j = 0; j < len; ++j) base[j * inner] /= z;
        }
    }
    const std::uint32_t out_id = static_cast<std::uint32_t>(x.tape->size());
    return x.tape->record(std::move(out), {x}, [x, out_id, outer, inner, len](Tape& t, const DenseArray& g) {
        DenseArray* gx = target(t, x);
        if (!gx) return;
        const DenseArray& y = t.value(out_id);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t idx = base + j * inner;
                    (*gx)[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    }, "softmax");
}

Var causal_fill(Var scores, double fill) {
    require_rank2(scores, "causal_fill");
    const std::size_t rows = scores.shape()[0], cols = scores.shape()[1];
    DenseArray out = scores.value();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = i + 1; j < cols; ++j) out[i * cols + j] = fill;
    return scores.tape->record(std::move(out), {scores}, [scores, rows, cols](Tape& t, const DenseArray& g) {
        DenseArray* gs = target(t, scores);
        if (!gs) return;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j <= i && j < cols; ++j) (*gs)[i * cols + j] += g[i * cols + j];
    }, "causal_fill");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const std::size_t rows = x.value().rows(), cols = x.value().cols();
    if (gain.value().size() != cols || bias.value().size() != cols) {
        throw DimensionError("layer_norm: gain/bias must match last extent of " + to_string(x.shape()));
    }
    const DenseArray& xv = x.value();
    const DenseArray& gv = gain.value();
    const DenseArray& bv = bias.value();
    DenseArray out(xv.shape());
    // Normalised activations and inverse deviations, kept for the backward rule.
    std::vector<double> xhat(xv.size()), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* p = xv.data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += p[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (p[c] - mean) * (p[c] - mean);
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const double h = (p[c] - mean) * inv_std[r];
            xhat[r * cols + c] = h;
            out[r * cols + c] = gv[c] * h + bv[c];
        }
    }
    return x.tape->record(
        std::move(out), {x, gain, bias},
        [x, gain, bias, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                                           const DenseArray& g) {
            const DenseArray& gv = t.value(gain.id);
            if (DenseArray* gx = target(t, x)) {
                const double n = static_cast<double>(cols);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const double d = g[r * cols + c] * gv[c];
                        mean_d += d;
                        mean_dx += d * xhat[r * cols + c];
                    }
                    mean_d /= n;
                    mean_dx /= n;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const double d = g[r * cols + c] * gv[c];
                        (*gx)[r * cols + c] += inv_std[r] * (d - mean_d - xhat[r * cols + c] * mean_dx);
                    }
                }
            }
            if (DenseArray* gg = target(t, gain))
                for (std::size_t i = 0; i < g.size(); ++i) (*gg)[i % cols] += g[i] * xhat[i];
            if (DenseArray* gb = target(t, bias))
                for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % cols] += g[i];
        },
        "layer_norm");
}

Var embedding(Var table, std::span<const std::uint32_t> ids) {
    require_rank2(table, "embedding");
    const std::size_t vocab = table.shape()[0], dim = table.shape()[1];
    if (ids.empty()) throw DimensionError("embedding: empty id list");
    DenseArray out({ids.size(), dim});
    const DenseArray& tv = table.value();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab) {
            throw DimensionError("embedding: id " + std::to_string(ids[i]) + " out of range " + std::to_string(vocab));
        }
        std::copy_n(tv.data() + ids[i] * dim, dim, out.data() + i * dim);
    }
    std::vector<std::uint32_t> saved(ids.begin(), ids.end());
    return table.tape->record(std::move(out), {table}, [table, dim, saved = std::move(saved)](Tape& t,
                                                                                          const DenseArray& g) {
        DenseArray* gt = target(t, table);
        if (!gt) return;
        for (std::size_t i = 0; i < saved.size(); ++i) {
            double* row = gt->data() + saved[i] * dim;
            for (std::size_t c = 0; c < dim; ++c) row[c] += g[i * dim + c];
        }
    }, "embedding");
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
    require_rank2(x, "slice_rows");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    if (count == 0 || begin + count > rows) {
        throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                             ") outside " + to_string(x.shape()));
    }
    const DenseArray& xv = x.value();
    DenseArray out({count, cols}, std::vector<double>(xv.data() + begin * cols, xv.data() + (begin + count) * cols));
    return x.tape->record(std::move(out), {x}, [x, begin, cols](Tape& t, const DenseArray& g) {
        if (DenseArray* gx = target(t, x))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[begin * cols + i] += g[i];
    }, "slice_rows");
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
    require_rank2(x, "slice_cols");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    if (count == 0 || begin + count > cols) {
        throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                             ") outside " + to_string(x.shape()));
    }
    DenseArray out({rows, count});
    const DenseArray& xv = x.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * cols + begin, count, out.data() + r * count);
    return x.tape->record(std::move(out), {x}, [x, begin, count, rows, cols](Tape& t, const DenseArray& g) {
        DenseArray* gx = target(t, x);
        if (!gx) return;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < count; ++c) (*gx)[r * cols + begin + c] += g[r * count + c];
    }, "slice_cols");
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no operands");
    Tape* tape = parts.front().tape;
    const std::size_t rows = parts.front().shape()[0];
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.shape()[0] != rows) throw DimensionError("concat_cols: row counts differ");
        total += p.shape()[1];
    }
    DenseArray out({rows, total});
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const std::size_t c = p.shape()[1];
        const DenseArray& pv = p.value();
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(pv.data() + r * c, c, out.data() + r * total + offset);
        offset += c;
    }
    std::vector<Var> saved(parts.begin(), parts.end());
    return tape->record(std::move(out), parts, [saved, rows, total](Tape& t, const DenseArray& g) {
        std::size_t off = 0;
        for (const Var& p : saved) {
            const std::size_t c = t.value(p.id).shape()[1];
            if (DenseArray* gp = target(t, p))
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < c; ++j) (*gp)[r * c + j] += g[r * total + off + j];
            off += c;
        }
    }, "concat_cols");
}

Var reshape(Var x, Shape shape) {
    DenseArray out = x.value();
    out.reshape(std::move(shape));
    return x.tape->record(std::move(out), {x}, [x](Tape& t, const DenseArray& g) {
        if (DenseArray* gx = target(t, x))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    }, "reshape");
}

Var dropout(Var x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidArgument("dropout rate must lie in [0, 1)");
    if (rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.value().size());
    for (double& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0;
    DenseArray out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return x.tape->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, const DenseArray& g) {
        if (DenseArray* gx = target(t, x))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
    }, "dropout");
}

Var cross_entropy(Var logits, std::span<const std::uint32_t> targets, std::span<const std::uint8_t> mask) {
    require_rank2(logits, "cross_entropy");
    const std::size_t rows = logits.shape()[0], vocab = logits.shape()[1];
    if (targets.size() != rows || mask.size() != rows) {
        throw DimensionError("cross_entropy: targets/mask length must equal " + std::to_string(rows) + " rows");
    }
    std::size_t active = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (!mask[r]) continue;
        if (targets[r] >= vocab) {
            throw DimensionError("cross_entropy: target " + std::to_string(targets[r]) + " out of range " +
                                 std::to_string(vocab));
        }
        ++active;
    }
    if (active == 0) throw InvalidArgument("cross_entropy: every position is masked out (empty loss)");

    const DenseArray& lv = logits.value();
    // Softmax of the active rows, reused by the backward rule.
    std::vector<double> probs(active * vocab);
    std::vector<std::uint32_t> active_rows, active_targets;
    double total = 0.0;
    std::size_t k = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (!mask[r]) continue;
        std::span<double> row(probs.data() + k * vocab, vocab);
        std::copy_n(lv.data() + r * vocab, vocab, row.begin());
        log_softmax_inplace(row);
        total -= row[targets[r]];
        for (double& v : row) v = std::exp(v);
        active_rows.push_back(static_cast<std::uint32_t>(r));
        active_targets.push_back(targets[r]);
        ++k;
    }
    const double inv = 1.0 / static_cast<double>(active);
    return logits.tape->record(
        DenseArray::scalar(total * inv), {logits},
        [logits, vocab, inv, probs = std::move(probs), active_rows = std::move(active_rows),
         active_targets = std::move(active_targets)](Tape& t, const DenseArray& g) {
            DenseArray* gl = target(t, logits);
            if (!gl) return;
            const double s = g[0] * inv;
            for (std::size_t k = 0; k < active_rows.size(); ++k) {
                double* out = gl->data() + active_rows[k] * vocab;
                const double* p = probs.data() + k * vocab;
                for (std::size_t c = 0; c < vocab; ++c) out[c] += s * p[c];
                out[active_targets[k]] -= s;
            }
        },
        "cross_entropy");
}

}  // namespace coqg::ad
