// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Generation metrics (corpus BLEU, ROUGE-L) and SQuAD-style answer metrics.

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coqg {

using Words = std::vector<std::string>;

// Corpus BLEU-1..max_n against one reference per candidate. No smoothing:
// an order with zero matches zeroes every BLEU-n from that order on.
std::vector<double> bleu(std::span<const Words> candidates, std::span<const Words> references, std::size_t max_n = 4);

// LCS F-measure; 0 when either side is empty.
double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference, double beta = 1.2);
double rouge_l_corpus(std::span<const Words> candidates, std::span<const Words> references, double beta = 1.2);

// Lowercase, drop ASCII punctuation, drop a/an/the, collapse whitespace.
std::string squad_normalize(std::string_view text);
double exact_match(std::string_view pred, std::string_view gold);
double token_f1(std::string_view pred, std::string_view gold);
// Maximum over several gold answers.
double exact_match(std::string_view pred, std::span<const std::string> golds);
double token_f1(std::string_view pred, std::span<const std::string> golds);

struct GenerationPair {
    Words generated;
    Words gold;
};

struct AnswerPair {
    std::string predicted;
    std::vector<std::string> golds;
};

struct MetricReport {
    static constexpr int kSchemaVersion = 1;

    std::optional<std::array<double, 4>> bleu;
    std::optional<double> rouge_l;
    std::optional<double> em;
    std::optional<double> f1;
    std::size_t generation_pairs = 0;
    std::size_t answer_pairs = 0;

    std::string to_json() const;
    static MetricReport from_json(const std::string& text);
    std::string to_table() const;
    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

MetricReport make_report(std::span<const GenerationPair> generation, std::span<const AnswerPair> answers);

}  // namespace coqg
