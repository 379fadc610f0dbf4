// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Answer-conditioned question generation by sequential top-k sampling.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nets.hpp"
#include "tokenizer.hpp"

namespace coqg {

class Rng;

struct SamplerConfig {
    std::size_t k = 1;
    std::size_t max_question_len = 24;
    std::uint64_t rng_seed = 0;

    void validate(std::size_t vocab_size) const;
};

struct GeneratedQuestion {
    TokenSequence tokens;
    bool truncated = false;  // budget ran out before "?"
};

// Reserved ids other than "?" never enter the candidate set. With k == 1
// the rng is not consulted.
GeneratedQuestion sample_question(const DecoderLM& model, const Vocab& vocab, std::span<const TokenId> context,
                                  TokenSpan answer, const SamplerConfig& cfg, Rng& rng);
GeneratedQuestion sample_question(const DecoderLM& model, const Vocab& vocab, std::span<const TokenId> context,
                                  TokenSpan answer, const SamplerConfig& cfg);

struct GenerationRequest {
    std::string record_id;
    std::string context_id;
    std::vector<std::string> context;  // words
    TokenSpan answer;
};

struct GenerationResult {
    std::string record_id;
    std::string context_id;
    std::string answer_text;
    std::vector<std::string> question;
    bool truncated = false;
};

struct GenerationError {
    std::string record_id;
    std::string message;
};

struct GenerationBatch {
    std::vector<GenerationResult> results;  // input order, failed records skipped
    std::vector<GenerationError> errors;
};

// Each record samples from its own stream seeded by (rng_seed, record_id).
GenerationBatch batch_generate(const DecoderLM& model, const Vocab& vocab, std::span<const GenerationRequest> records,
                               const SamplerConfig& cfg);

// One JSON object per line: record_id, context_id, answer, question, truncated.
std::string generation_jsonl(std::span<const GenerationResult> results);
std::vector<GenerationResult> parse_generation_jsonl(const std::string& text);

}  // namespace coqg
