// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dense_array.hpp"

namespace coqg {

struct Parameter {
    DenseArray value;
    DenseArray grad;           // allocated on first accumulation
    DenseArray first_moment;   // Adam state, allocated on first step
    DenseArray second_moment;
    bool trainable = true;

    bool has_grad() const { return !grad.empty(); }
    void accumulate_grad(const DenseArray& g);
};

// Named parameters, iterated in name order so every traversal (hashing,
// serialization, optimizer updates) is deterministic.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

    Parameter& add(const std::string& name, DenseArray init, bool trainable = true);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;

    std::uint64_t rng_seed() const { return rng_seed_; }
    std::uint64_t optimizer_steps() const { return optimizer_steps_; }
    void set_optimizer_steps(std::uint64_t n) { optimizer_steps_ = n; }

    void clear_grads();
    bool any_grad() const;

    // Hash over names, shapes and values; optimizer state excluded.
    std::uint64_t value_hash() const;

private:
    std::map<std::string, Parameter> entries_;
    std::uint64_t rng_seed_ = 0;
    std::uint64_t optimizer_steps_ = 0;
};

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update over every trainable parameter holding a
// gradient; gradients are cleared afterwards. Throws if no gradient exists.
void adam_step(ParameterStore& store, const AdamConfig& cfg);

}  // namespace coqg
