// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "checkpoint.hpp"
#include "errors.hpp"

namespace coqg {

namespace {

constexpr std::string_view kVocabHeader = "#coqg-vocab 1";

bool is_ascii_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }

}  // namespace

const std::vector<std::string>& special_surface_forms() {
    static const std::vector<std::string> forms = {"<pad>", "<bos>", "<ans>", "</ans>", "<gen>", "<unk>", "?"};
    return forms;
}

std::vector<TokenOffset> tokenize_with_offsets(std::string_view text) {
    std::vector<TokenOffset> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_ascii_space(c)) {
            ++i;
        } else if (is_ascii_punct(c)) {
            out.push_back({std::string(1, static_cast<char>(c)), i, i + 1});
            ++i;
        } else {
            const std::size_t begin = i;
            std::string word;
            while (i < text.size()) {
                const auto d = static_cast<unsigned char>(text[i]);
                if (is_ascii_space(d) || is_ascii_punct(d)) break;
                word.push_back(d < 128 ? static_cast<char>(std::tolower(d)) : static_cast<char>(d));
                ++i;
            }
            out.push_back({std::move(word), begin, i});
        }
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    for (auto& t : tokenize_with_offsets(text)) out.push_back(std::move(t.text));
    return out;
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
            throw FormatError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
}

Vocab Vocab::build_from_words(std::span<const std::vector<std::string>> sentences, std::size_t min_count) {
    if (sentences.empty()) throw InvalidArgument("cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& s : sentences)
        for (const auto& w : s) ++counts[w];
    const auto& specials = special_surface_forms();
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [w, n] : counts) {
        if (n < min_count) continue;
        if (std::find(specials.begin(), specials.end(), w) != specials.end()) continue;
        ranked.emplace_back(w, n);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens = specials;
    for (auto& [w, _] : ranked) tokens.push_back(w);
    return Vocab(std::move(tokens));
}

Vocab Vocab::build(std::span<const std::string> corpus, std::size_t min_count) {
    if (corpus.empty()) throw InvalidArgument("cannot build a vocabulary from an empty corpus");
    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(corpus.size());
    for (const auto& text : corpus) sentences.push_back(tokenize(text));
    return build_from_words(sentences, min_count);
}

TokenId Vocab::id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? id_of(Special::Unk) : it->second;
}

bool Vocab::contains(std::string_view word) const { return index_.count(std::string(word)) != 0; }

const std::string& Vocab::token(TokenId id) const {
    if (id >= tokens_.size()) throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[id];
}

TokenSequence Vocab::encode(std::string_view text) const {
    const auto words = tokenize(text);
    return encode_words(words);
}

TokenSequence Vocab::encode_words(std::span<const std::string> words) const {
    TokenSequence ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id(w));
    return ids;
}

std::vector<std::string> Vocab::words(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (TokenId t : ids) out.push_back(token(t));
    return out;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += token(ids[i]);
    }
    return out;
}

std::string Vocab::serialize() const {
    std::ostringstream os;
    os << kVocabHeader << '\n';
    for (std::size_t i = 0; i < tokens_.size(); ++i) os << tokens_[i] << '\t' << i << '\n';
    return os.str();
}

Vocab Vocab::deserialize(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kVocabHeader) throw FormatError("vocabulary file lacks the version header");
    std::vector<std::string> tokens;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) throw FormatError("vocabulary line " + std::to_string(line_no) + " lacks a tab");
        const std::string token = line.substr(0, tab);
        std::size_t id = 0;
        try {
            id = std::stoul(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw FormatError("vocabulary line " + std::to_string(line_no) + " has a malformed id");
        }
        if (id != tokens.size()) throw FormatError("vocabulary ids must be contiguous from 0");
        tokens.push_back(token);
    }
    const auto& specials = special_surface_forms();
    if (tokens.size() < specials.size() || !std::equal(specials.begin(), specials.end(), tokens.begin())) {
        throw FormatError("vocabulary does not start with the reserved tokens");
    }
    return Vocab(std::move(tokens));
}

void Vocab::save(const std::string& path) const { write_file(path, serialize()); }

Vocab Vocab::load(const std::string& path) { return deserialize(read_file(path)); }

QgInput format_qg_input(const Vocab& vocab, std::span<const TokenId> context, TokenSpan answer,
                        std::optional<std::span<const TokenId>> question) {
    (void)vocab;
    if (answer.start > answer.end || answer.end >= context.size()) {
        throw InvalidArgument("answer span [" + std::to_string(answer.start) + ", " + std::to_string(answer.end) +
                              "] outside context of " + std::to_string(context.size()) + " tokens");
    }
    QgInput in;
    auto& ids = in.ids;
    ids.reserve(context.size() + 4 + (question ? question->size() : 0));
    ids.push_back(id_of(Special::Bos));
    ids.insert(ids.end(), context.begin(), context.begin() + static_cast<std::ptrdiff_t>(answer.start));
    ids.push_back(id_of(Special::AnsOpen));
    ids.insert(ids.end(), context.begin() + static_cast<std::ptrdiff_t>(answer.start),
               context.begin() + static_cast<std::ptrdiff_t>(answer.end + 1));
    ids.push_back(id_of(Special::AnsClose));
    ids.insert(ids.end(), context.begin() + static_cast<std::ptrdiff_t>(answer.end + 1), context.end());
    ids.push_back(id_of(Special::Gen));
    in.question_begin = ids.size();
    in.loss_mask.assign(ids.size(), 0);
    if (question) {
        ids.insert(ids.end(), question->begin(), question->end());
        in.loss_mask.resize(ids.size(), 1);
    }
    return in;
}

QaInput format_qa_input(const Vocab& vocab, std::span<const TokenId> context, std::span<const TokenId> question,
                        std::size_t max_len) {
    (void)vocab;
    if (context.empty() || question.empty()) throw InvalidArgument("QA input needs a non-empty question and context");
    QaInput in;
    in.ids.push_back(id_of(Special::Bos));
    in.ids.insert(in.ids.end(), question.begin(), question.end());
    in.ids.push_back(id_of(Special::Gen));
    in.context_begin = in.ids.size();
    if (in.context_begin >= max_len) {
        throw DimensionError("question of " + std::to_string(question.size()) + " tokens leaves no room for context in " +
                             std::to_string(max_len) + " positions");
    }
    const std::size_t room = max_len - in.context_begin;
    in.context_length = std::min(room, context.size());
    in.truncated = in.context_length < context.size();
    in.ids.insert(in.ids.end(), context.begin(), context.begin() + static_cast<std::ptrdiff_t>(in.context_length));
    return in;
}

}  // namespace coqg
