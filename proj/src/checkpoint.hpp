// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary parameter container, version 1. Little-endian throughout:
//
//   "COQGCKPT"                       8-byte magic
//   u32 format_version
//   u64 rng_seed, u64 optimizer_steps
//   u32 metadata_bytes, metadata     free-form UTF-8 (JSON for model files)
//   u32 entry_count, then per entry in name order:
//     u32 name_bytes, name
//     u8 trainable, u8 has_moments
//     u32 rank, u64 extents[rank]
//     f64 values[n], and when has_moments: f64 first[n], f64 second[n]

#pragma once

#include <cstdint>
#include <string>

#include "parameter_store.hpp"

namespace coqg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ParameterStore store;
    std::string metadata;
};

std::string serialize_checkpoint(const ParameterStore& store, const std::string& metadata);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const ParameterStore& store, const std::string& metadata);
Checkpoint load_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace coqg
