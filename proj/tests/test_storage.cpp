// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "checkpoint.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "rng.hpp"

using namespace coqg;

namespace {

ParameterStore sample_store() {
    ParameterStore store(42);
    store.add("b", DenseArray({3}, std::vector<double>{1.0, -2.5, 1e-300}));
    store.add("a", DenseArray::matrix({{0.1, 0.2}, {0.3, 0.4}}));
    store.add("frozen", DenseArray({1}, std::vector<double>{7.0}), false);
    store.set_optimizer_steps(9);
    return store;
}

}  // namespace

TEST_CASE("dense array shapes") {
    DenseArray a({2, 3}, 1.5);
    CHECK(a.rows() == 2);
    CHECK(a.cols() == 3);
    CHECK(a.at(1, 2) == 1.5);
    a.reshape({3, 2});
    CHECK(a.rows() == 3);
    CHECK_THROWS_AS(a.reshape({4, 2}), DimensionError);
    CHECK_THROWS_AS(DenseArray({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    DenseArray v({3});
    CHECK(v.rows() == 1);
    CHECK(v.cols() == 3);
    CHECK(v.all_finite());
    v[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(v.all_finite());
}

TEST_CASE("gemm kernels against a naive triple loop") {
    Rng rng(5);
    const std::size_t m = 4, k = 7, n = 3;
    std::vector<double> a(m * k), b(k * n), bt(n * k);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
    std::vector<double> want(m * n, 0.0), nn(m * n, 0.0), nt(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) want[i * n + j] += a[i * k + p] * b[p * n + j];
    kernels::gemm_nn(a.data(), b.data(), nn.data(), m, k, n);
    kernels::gemm_nt(a.data(), bt.data(), nt.data(), m, k, n);
    for (std::size_t i = 0; i < m * n; ++i) {
        CHECK(nn[i] == doctest::Approx(want[i]).epsilon(1e-12));
        CHECK(nt[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
    // a^T c with c [m x n]
    std::vector<double> c(m * n), tn(k * n, 0.0), tn_want(k * n, 0.0);
    for (auto& x : c) x = rng.normal();
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < m; ++i) tn_want[p * n + j] += a[i * k + p] * c[i * n + j];
    kernels::gemm_tn(a.data(), c.data(), tn.data(), m, k, n);
    for (std::size_t i = 0; i < k * n; ++i) CHECK(tn[i] == doctest::Approx(tn_want[i]).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip is exact") {
    ParameterStore store = sample_store();
    store.at("a").first_moment = DenseArray({2, 2}, 0.5);
    store.at("a").second_moment = DenseArray({2, 2}, 0.25);
    const std::string bytes = serialize_checkpoint(store, R"({"kind":"test"})");
    CHECK(bytes.substr(0, 8) == "COQGCKPT");
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(back.metadata == R"({"kind":"test"})");
    CHECK(back.store.rng_seed() == 42);
    CHECK(back.store.optimizer_steps() == 9);
    CHECK(back.store.value_hash() == store.value_hash());
    CHECK(back.store.at("a").second_moment == store.at("a").second_moment);
    CHECK_FALSE(back.store.at("frozen").trainable);
    CHECK(back.store.at("b").value.values()[2] == 1e-300);
    CHECK(serialize_checkpoint(back.store, back.metadata) == bytes);
}

TEST_CASE("checkpoint files round trip through disk") {
    const auto path = std::filesystem::temp_directory_path() / "coqg_unit_ckpt.bin";
    save_checkpoint(path.string(), sample_store(), "m");
    CHECK(load_checkpoint(path.string()).store.value_hash() == sample_store().value_hash());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path.string()), IoError);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const std::string good = serialize_checkpoint(sample_store(), "");
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), FormatError);
    std::string bad_version = good;
    bad_version[8] = 2;
    CHECK_THROWS_AS(deserialize_checkpoint(bad_version), FormatError);
    for (std::size_t cut : {std::size_t{4}, std::size_t{20}, good.size() - 1}) {
        CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, cut)), FormatError);
    }
    CHECK_THROWS_AS(deserialize_checkpoint(good + "x"), FormatError);
}

TEST_CASE("value hash sees names, shapes and values but not moments") {
    ParameterStore a = sample_store();
    const auto h = a.value_hash();
    a.at("a").first_moment = DenseArray({2, 2}, 1.0);
    CHECK(a.value_hash() == h);
    a.at("a").value.values()[3] = std::nextafter(0.4, 1.0);
    CHECK(a.value_hash() != h);

    ParameterStore b;
    b.add("x", DenseArray({2, 3}));
    ParameterStore c;
    c.add("x", DenseArray({3, 2}));
    ParameterStore d;
    d.add("y", DenseArray({2, 3}));
    CHECK(b.value_hash() != c.value_hash());
    CHECK(b.value_hash() != d.value_hash());
}

TEST_CASE("derived seeds are stable and separated") {
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
    CHECK(derive_seed(1, hash_string("a"), 0) != derive_seed(1, hash_string("b"), 0));
    Rng x(derive_seed(9, 1)), y(derive_seed(9, 1));
    for (int i = 0; i < 10; ++i) CHECK(x.next_u64() == y.next_u64());
}

TEST_CASE("rng helpers stay in range") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        CHECK(rng.below(7) < 7);
    }
    std::vector<int> v = {0, 1, 2, 3, 4, 5};
    rng.shuffle(v);
    std::sort(v.begin(), v.end());
    CHECK(v == std::vector<int>{0, 1, 2, 3, 4, 5});
}
