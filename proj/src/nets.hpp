// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// The two transformer networks: a causal decoder language model that writes
// questions, and a span-extraction QA model (bidirectional by default; the
// causal backbone gives the decoder-with-span-head ablation variant).
//
// Both use pre-layer-norm blocks with learned positional embeddings, GELU
// feed-forward layers and residual dropout. The decoder ties its output
// projection to the token embedding.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "parameter_store.hpp"
#include "tokenizer.hpp"

namespace coqg {

class Rng;

struct NetConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ff = 256;
    std::size_t max_seq_len = 128;
    double dropout_rate = 0.1;
    bool causal = true;

    void validate() const;
    std::string to_json() const;
    static NetConfig from_json(const std::string& text);
    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// Dropout is applied only when training is set, drawing from rng.
struct ForwardOptions {
    bool training = false;
    Rng* rng = nullptr;
};

// Shared embedding + block stack. Parameters live in the owner's store and are
// looked up by name on each pass, so models stay freely copyable.
class TransformerStack {
public:
    static void init_parameters(const NetConfig& cfg, ParameterStore& store, Rng& rng);
    // Final-layer-normed hidden states, [T x d_model].
    static ad::Var hidden(const NetConfig& cfg, ParameterStore& store, ad::Tape& tape, std::span<const TokenId> ids,
                          const ForwardOptions& opts);
};

class DecoderLM {
public:
    DecoderLM() = default;
    DecoderLM(NetConfig cfg, std::uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    ParameterStore& parameters() { return store_; }
    const ParameterStore& parameters() const { return store_; }

    // Next-token logits [T x V]; row t scores token t+1.
    ad::Var logits(ad::Tape& tape, std::span<const TokenId> ids, const ForwardOptions& opts = {}) const;

    void save(const std::string& path) const;
    static DecoderLM load(const std::string& path);

private:
    friend class IncrementalDecoder;
    NetConfig cfg_;
    // Forward passes only read parameter values; tapes need a mutable handle
    // to route gradients back.
    mutable ParameterStore store_;
};

// Row-stochastic [T x V]: row t is p(token t+1 | tokens 0..t).
DenseArray decoder_forward(const DecoderLM& model, std::span<const TokenId> ids);

// Masked next-token NLL over the question positions of a formatted input.
ad::Var qg_loss(ad::Tape& tape, const DecoderLM& model, const QgInput& input, const ForwardOptions& opts = {});

// Key/value-cached evaluation of the decoder for autoregressive sampling.
// Produces the same logits as DecoderLM::logits, position by position.
class IncrementalDecoder {
public:
    explicit IncrementalDecoder(const DecoderLM& model);

    // Appends tokens and returns the logits row for the last one.
    std::vector<double> feed(std::span<const TokenId> ids);
    std::size_t length() const { return length_; }

private:
    struct Layer;
    void step(TokenId id, std::vector<double>& logits_out, bool want_logits);

    const DecoderLM& model_;
    std::vector<std::vector<double>> keys_, values_;  // per layer, [length x d_model]
    std::size_t length_ = 0;
};

struct SpanPrediction {
    std::size_t start = 0;  // context token indices, inclusive
    std::size_t end = 0;
    double score = 0.0;  // log p_start(start) + log p_end(end)
};

// Span QA network: a transformer stack with a two-column head producing start
// and end logits at every position.
class SpanQaNet {
public:
    SpanQaNet() = default;
    SpanQaNet(NetConfig cfg, std::uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    ParameterStore& parameters() { return store_; }
    const ParameterStore& parameters() const { return store_; }
    bool causal() const { return cfg_.causal; }

    // [T x 2]: column 0 start logits, column 1 end logits.
    ad::Var span_logits(ad::Tape& tape, std::span<const TokenId> ids, const ForwardOptions& opts = {}) const;

    void save(const std::string& path) const;
    static SpanQaNet load(const std::string& path);

private:
    NetConfig cfg_;
    mutable ParameterStore store_;
};

// Evaluated logits of a span network, [T x 2].
DenseArray encoder_forward(const SpanQaNet& model, std::span<const TokenId> ids);

// 0.5 * (CE over context positions of the start logits at gold.start + the
// same for the end logits). Gold indices are context-relative.
ad::Var qa_span_loss(ad::Tape& tape, const SpanQaNet& model, const QaInput& input, TokenSpan gold,
                     const ForwardOptions& opts = {});

// Joint argmax of log p_start(i) + log p_end(j) over context positions with
// i <= j and j - i < max_answer_len; ties go to the smallest i, then j.
SpanPrediction best_span(const DenseArray& logits, std::size_t context_begin, std::size_t context_length,
                         std::size_t max_answer_len);

SpanPrediction qa_predict_span(const SpanQaNet& model, const QaInput& input, std::size_t max_answer_len);

}  // namespace coqg
