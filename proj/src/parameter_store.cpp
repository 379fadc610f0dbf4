// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "parameter_store.hpp"

#include <cmath>

#include "errors.hpp"
#include "rng.hpp"

namespace coqg {

void Parameter::accumulate_grad(const DenseArray& g) {
    if (g.shape() != value.shape()) {
        throw DimensionError("gradient shape " + to_string(g.shape()) + " does not match parameter " +
                             to_string(value.shape()));
    }
    if (grad.empty()) {
        grad = g;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Parameter& ParameterStore::add(const std::string& name, DenseArray init, bool trainable) {
    auto [it, inserted] = entries_.try_emplace(name);
    if (!inserted) throw InvalidArgument("duplicate parameter name '" + name + "'");
    it->second.value = std::move(init);
    it->second.trainable = trainable;
    return it->second;
}

Parameter& ParameterStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : entries_) n += p.value.size();
    return n;
}

void ParameterStore::clear_grads() {
    for (auto& [_, p] : entries_) p.grad = DenseArray();
}

bool ParameterStore::any_grad() const {
    for (const auto& [_, p] : entries_)
        if (p.trainable && p.has_grad()) return true;
    return false;
}

std::uint64_t ParameterStore::value_hash() const {
    Fnv1a h;
    for (const auto& [name, p] : entries_) {
        h.update(name);
        for (std::size_t e : p.value.shape()) h.update_value(static_cast<std::uint64_t>(e));
        h.update(p.value.data(), p.value.size() * sizeof(double));
    }
    return h.digest();
}

void adam_step(ParameterStore& store, const AdamConfig& cfg) {
    if (!store.any_grad()) throw InvalidArgument("adam_step called without any populated gradient");
    const std::uint64_t t = store.optimizer_steps() + 1;
    const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (auto& [name, p] : store) {
        if (!p.trainable || !p.has_grad()) continue;
        if (p.first_moment.empty()) {
            p.first_moment = DenseArray(p.value.shape(), 0.0);
            p.second_moment = DenseArray(p.value.shape(), 0.0);
        }
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            double& m = p.first_moment[i];
            double& v = p.second_moment[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m / correction1;
            const double v_hat = v / correction2;
            p.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
        if (!p.value.all_finite()) throw NumericError("non-finite value in parameter '" + name + "' after Adam step");
    }
    store.set_optimizer_steps(t);
    store.clear_grads();
}

}  // namespace coqg
