// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus records, SQuAD v1.1 ingestion, the synthetic biography corpus and
// the context-level splits.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tokenizer.hpp"

namespace coqg {

using Words = std::vector<std::string>;

struct QaTuple {
    std::string id;
    TokenSpan answer;                  // into the context words
    Words question;
    std::vector<std::string> golds;    // accepted answer strings; empty means the span text
};

struct ContextRecord {
    std::string id;
    Words context;
    std::vector<QaTuple> tuples;

    std::string span_text(TokenSpan s) const;
    std::vector<std::string> gold_answers(const QaTuple& t) const;
};

struct TupleSet {
    std::vector<ContextRecord> records;

    std::size_t context_count() const { return records.size(); }
    std::size_t tuple_count() const;
    // Throws InvariantError on an out-of-range span, an empty question or a
    // duplicate id.
    void validate() const;
    std::vector<std::string> context_ids() const;
};

// A context whose questions are hidden; only answer spans survive.
class UnlabeledRecord {
public:
    struct Answer {
        std::string id;
        TokenSpan span;
        std::vector<std::string> golds;
    };

    explicit UnlabeledRecord(const ContextRecord& r);

    const std::string& id() const { return id_; }
    const Words& context() const { return context_; }
    const std::vector<Answer>& answers() const { return answers_; }

    // Re-attach questions (one per answer, same order).
    ContextRecord with_questions(std::span<const Words> questions) const;

private:
    std::string id_;
    Words context_;
    std::vector<Answer> answers_;
};

// Canonical line-delimited records, one context per line.
std::string records_jsonl(const TupleSet& set);
TupleSet parse_records_jsonl(const std::string& text);
void save_records(const std::string& path, const TupleSet& set);
TupleSet load_records(const std::string& path);

// ---------------------------------------------------------------------------
// SQuAD v1.1

struct QuarantineEntry {
    std::string qa_id;
    std::string reason;
};

struct SquadLoad {
    TupleSet set;
    std::vector<QuarantineEntry> quarantine;
    std::size_t total_qas = 0;
};

SquadLoad parse_squad(const std::string& text, const std::string& source = "<memory>");
SquadLoad load_squad(const std::string& path);

// Byte offset of the code point at index cp in UTF-8 text; npos when past the end.
std::size_t utf8_byte_offset(std::string_view text, std::size_t cp);

// ---------------------------------------------------------------------------
// Synthetic biography corpus

struct Relation {
    std::string name;
    Words body;                  // fact words after the subject; "OBJ" marks the answer slot
    Words objects;
    std::vector<Words> object_questions;   // "S" marks the subject
    std::vector<Words> subject_questions;  // "OBJ" marks the object
};

struct SyntheticTemplates {
    Words female_names, male_names;
    std::vector<Relation> relations;
    double subject_question_rate = 0.3;

    static SyntheticTemplates biographies();
    void validate() const;
};

struct SyntheticCorpus {
    TupleSet train;
    TupleSet dev;  // no (name, relation, object) triple shared with train
};

SyntheticCorpus generate_synthetic(const SyntheticTemplates& templates, std::size_t n_contexts, std::size_t n_dev,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Splits

struct HalfSplit {
    TupleSet sp2;  // pre-training half; takes the extra context when the count is odd
    TupleSet sp1;
};
HalfSplit half_split(const TupleSet& set, std::uint64_t seed);

struct LabelingSplit {
    TupleSet labeled;
    std::vector<UnlabeledRecord> unlabeled;
    TupleSet test;
};
LabelingSplit labeling_rate_split(const TupleSet& set, double rate, double test_fraction, std::uint64_t seed);

}  // namespace coqg
