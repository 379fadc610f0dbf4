// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include "doctest.h"
#include "errors.hpp"
#include "tokenizer.hpp"

using namespace coqg;

namespace {

Vocab small_vocab() {
    const std::vector<std::string> corpus = {"the cat sat .", "the dog sat ?", "a cat"};
    return Vocab::build(corpus);
}

}  // namespace

TEST_CASE("tokenize lowercases and splits punctuation") {
    CHECK(tokenize("Where's  the Cat?") == std::vector<std::string>{"where", "'", "s", "the", "cat", "?"});
    CHECK(tokenize("") .empty());
    CHECK(tokenize("<ans>") == std::vector<std::string>{"<", "ans", ">"});
    const auto offs = tokenize_with_offsets("Hi, Bo");
    REQUIRE(offs.size() == 3);
    CHECK(offs[1].text == ",");
    CHECK(offs[2].begin == 4);
    CHECK(offs[2].end == 6);
}

TEST_CASE("reserved ids come first in a fixed order") {
    const Vocab v = small_vocab();
    const auto& forms = special_surface_forms();
    REQUIRE(forms.size() == kSpecialCount);
    for (TokenId i = 0; i < kSpecialCount; ++i) CHECK(v.token(i) == forms[i]);
    CHECK(v.id("?") == id_of(Special::Question));
    CHECK(is_control_token(id_of(Special::Unk)));
    CHECK_FALSE(is_control_token(id_of(Special::Question)));
}

TEST_CASE("words sort by count then lexicographically") {
    const Vocab v = small_vocab();
    // counts: the 2, cat 2, sat 2, then a . dog at 1
    CHECK(v.token(7) == "cat");
    CHECK(v.token(8) == "sat");
    CHECK(v.token(9) == "the");
    CHECK(v.token(10) == ".");
    CHECK(v.token(11) == "a");
    CHECK(v.token(12) == "dog");
    CHECK(v.size() == 13);
}

TEST_CASE("unknown words encode to unk and decode round trips") {
    const Vocab v = small_vocab();
    const TokenSequence ids = v.encode("The bird sat");
    CHECK(ids == TokenSequence{v.id("the"), id_of(Special::Unk), v.id("sat")});
    CHECK(v.decode(v.encode("the cat sat ?")) == "the cat sat ?");
    CHECK_THROWS(v.token(999));
}

TEST_CASE("min_count drops rare words") {
    const std::vector<std::string> corpus = {"x x y"};
    const Vocab v = Vocab::build(corpus, 2);
    CHECK(v.contains("x"));
    CHECK_FALSE(v.contains("y"));
}

TEST_CASE("vocab serialization round trips and rejects damage") {
    const Vocab v = small_vocab();
    const std::string text = v.serialize();
    CHECK(Vocab::deserialize(text) == v);
    CHECK_THROWS_AS(Vocab::deserialize("garbage"), FormatError);
    std::string swapped = text;
    const auto pos = swapped.find("<pad>");
    swapped.replace(pos, 5, "<bad>");
    CHECK_THROWS_AS(Vocab::deserialize(swapped), FormatError);
}

TEST_CASE("qg layout wraps the answer and masks only the question") {
    const Vocab v = small_vocab();
    const TokenSequence ctx = v.encode("the cat sat .");
    const TokenSequence q = v.encode("the dog ?");
    const QgInput in = format_qg_input(v, ctx, {1, 2}, std::span<const TokenId>(q));
    const TokenSequence want = {1, v.id("the"), 2, v.id("cat"), v.id("sat"), 3, v.id("."), 4,
                                v.id("the"), v.id("dog"), 6};
    CHECK(in.ids == want);
    CHECK(in.question_begin == 8);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(in.loss_mask[i] == (i >= 8 ? 1 : 0));
    const QgInput prefix = format_qg_input(v, ctx, {1, 2}, std::nullopt);
    CHECK(prefix.ids.size() == 8);
    CHECK(prefix.ids.back() == id_of(Special::Gen));
    CHECK_THROWS_AS(format_qg_input(v, ctx, {2, 1}, std::nullopt), InvalidArgument);
    CHECK_THROWS_AS(format_qg_input(v, ctx, {0, 4}, std::nullopt), InvalidArgument);
}

TEST_CASE("qa layout maps positions and clips long contexts") {
    const Vocab v = small_vocab();
    const TokenSequence ctx = v.encode("the cat sat . a dog");
    const TokenSequence q = v.encode("the cat ?");
    const QaInput full = format_qa_input(v, ctx, q, 64);
    CHECK(full.context_begin == 5);
    CHECK(full.context_length == ctx.size());
    CHECK_FALSE(full.truncated);
    CHECK(full.ids[full.to_position(2)] == v.id("sat"));
    CHECK(full.to_context_index(full.to_position(4)) == 4);
    const QaInput clipped = format_qa_input(v, ctx, q, 8);
    CHECK(clipped.truncated);
    CHECK(clipped.context_length == 3);
    CHECK(clipped.ids.size() == 8);
    CHECK_THROWS_AS(format_qa_input(v, ctx, q, 5), DimensionError);
    CHECK_THROWS_AS(format_qa_input(v, {}, q, 64), InvalidArgument);
}
