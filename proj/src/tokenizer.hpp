// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Word-level vocabulary and the two input layouts the networks consume.
//
// Reserved ids, always the lowest and in this order:
//   0 <pad>   1 <bos>   2 <ans>   3 </ans>   4 <gen>   5 <unk>   6 ?
// The angle-bracket forms cannot come out of tokenize(), which splits '<',
// '/' and '>' into separate tokens, so raw text never encodes to them.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace coqg {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

enum class Special : TokenId {
    Pad = 0,
    Bos = 1,
    AnsOpen = 2,
    AnsClose = 3,
    Gen = 4,
    Unk = 5,
    Question = 6,
};

inline constexpr TokenId id_of(Special s) { return static_cast<TokenId>(s); }
inline constexpr std::size_t kSpecialCount = 7;
// Ids a generator may never emit: everything reserved except the "?" terminal.
inline constexpr bool is_control_token(TokenId id) { return id < id_of(Special::Question); }

struct TokenOffset {
    std::string text;
    std::size_t begin = 0;  // byte offsets into the source text
    std::size_t end = 0;
};

// Lowercases ASCII letters; whitespace separates words and every ASCII
// punctuation character becomes a token of its own.
std::vector<TokenOffset> tokenize_with_offsets(std::string_view text);
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
public:
    // Specials, then words by descending count, ties lexicographic. Words
    // seen fewer than min_count times are left out and encode to <unk>.
    static Vocab build(std::span<const std::string> corpus, std::size_t min_count = 1);
    static Vocab build_from_words(std::span<const std::vector<std::string>> sentences, std::size_t min_count = 1);

    std::size_t size() const { return tokens_.size(); }
    TokenId id(std::string_view word) const;  // <unk> when absent
    bool contains(std::string_view word) const;
    const std::string& token(TokenId id) const;

    TokenSequence encode(std::string_view text) const;
    TokenSequence encode_words(std::span<const std::string> words) const;
    std::vector<std::string> words(std::span<const TokenId> ids) const;
    // Tokens joined by single spaces; specials render as their surface form.
    std::string decode(std::span<const TokenId> ids) const;

    // "#coqg-vocab 1" header, then one "token<TAB>id" line per entry.
    std::string serialize() const;
    static Vocab deserialize(const std::string& text);
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

private:
    explicit Vocab(std::vector<std::string> tokens);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

const std::vector<std::string>& special_surface_forms();

// Inclusive token interval [start, end] inside a context.
struct TokenSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct QgInput {
    TokenSequence ids;
    std::vector<std::uint8_t> loss_mask;  // 1 exactly on question tokens
    std::size_t question_begin = 0;       // index of the first question token (one past <gen>)
};

// BOS . context[0, start) . <ans> . answer . </ans> . context(end, n) . <gen> . question
// Without a question the sequence ends at <gen>, ready for generation.
QgInput format_qg_input(const Vocab& vocab, std::span<const TokenId> context, TokenSpan answer,
                        std::optional<std::span<const TokenId>> question);

struct QaInput {
    TokenSequence ids;
    std::size_t context_begin = 0;   // position of context token 0
    std::size_t context_length = 0;  // context tokens present after truncation
    bool truncated = false;

    std::size_t to_position(std::size_t context_index) const { return context_begin + context_index; }
    std::size_t to_context_index(std::size_t position) const { return position - context_begin; }
};

// BOS . question . <gen> . context, clipping the context tail to max_len.
QaInput format_qa_input(const Vocab& vocab, std::span<const TokenId> context, std::span<const TokenId> question,
                        std::size_t max_len);

}  // namespace coqg
