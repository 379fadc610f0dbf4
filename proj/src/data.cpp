// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <tuple>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "json.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace coqg {

using json = nlohmann::json;

namespace {

std::string join(std::span<const std::string> words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

Words split(const std::string& s) {
    Words out;
    std::istringstream is(s);
    for (std::string w; is >> w;) out.push_back(w);
    return out;
}

std::string strip_spaces(std::string s) {
    s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
    return s;
}

TupleSet subset(const TupleSet& set, const std::vector<std::size_t>& idx) {
    TupleSet out;
    out.records.reserve(idx.size());
    for (std::size_t i : idx) out.records.push_back(set.records[i]);
    return out;
}

}  // namespace

std::string ContextRecord::span_text(TokenSpan s) const {
    if (s.start > s.end || s.end >= context.size()) throw InvalidArgument("span outside context '" + id + "'");
    return join(std::span<const std::string>(context).subspan(s.start, s.end - s.start + 1));
}

std::vector<std::string> ContextRecord::gold_answers(const QaTuple& t) const {
    if (!t.golds.empty()) return t.golds;
    return {span_text(t.answer)};
}

std::size_t TupleSet::tuple_count() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.tuples.size();
    return n;
}

void TupleSet::validate() const {
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (r.context.empty()) throw InvariantError("context '" + r.id + "' is empty");
        if (!ids.insert(r.id).second) throw InvariantError("duplicate context id '" + r.id + "'");
        for (const auto& t : r.tuples) {
            if (!ids.insert(t.id).second) throw InvariantError("duplicate tuple id '" + t.id + "'");
            if (t.answer.start > t.answer.end || t.answer.end >= r.context.size()) {
                throw InvariantError("tuple '" + t.id + "' has an answer span outside its context");
            }
            if (t.question.empty()) throw InvariantError("tuple '" + t.id + "' has an empty question");
        }
    }
}

std::vector<std::string> TupleSet::context_ids() const {
    std::vector<std::string> out;
    for (const auto& r : records) out.push_back(r.id);
    return out;
}

UnlabeledRecord::UnlabeledRecord(const ContextRecord& r) : id_(r.id), context_(r.context) {
    for (const auto& t : r.tuples) answers_.push_back({t.id, t.answer, t.golds});
}

ContextRecord UnlabeledRecord::with_questions(std::span<const Words> questions) const {
    if (questions.size() != answers_.size()) throw DimensionError("with_questions: one question per answer needed");
    ContextRecord r{id_, context_, {}};
    for (std::size_t i = 0; i < answers_.size(); ++i) r.tuples.push_back({answers_[i].id, answers_[i].span, questions[i], answers_[i].golds});
    return r;
}

// ---------------------------------------------------------------------------
// Canonical records

std::string records_jsonl(const TupleSet& set) {
    std::string out;
    for (const auto& r : set.records) {
        json tuples = json::array();
        for (const auto& t : r.tuples) {
            json jt = {{"id", t.id}, {"answer", {t.answer.start, t.answer.end}}, {"question", join(t.question)}};
            if (!t.golds.empty()) jt["golds"] = t.golds;
            tuples.push_back(std::move(jt));
        }
        out += json{{"id", r.id}, {"context", join(r.context)}, {"tuples", tuples}}.dump() + "\n";
    }
    return out;
}

TupleSet parse_records_jsonl(const std::string& text) {
    TupleSet set;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            ContextRecord r{j.at("id").get<std::string>(), split(j.at("context").get<std::string>()), {}};
            for (const auto& jt : j.at("tuples")) {
                QaTuple t;
                t.id = jt.at("id").get<std::string>();
                t.answer = {jt.at("answer").at(0).get<std::size_t>(), jt.at("answer").at(1).get<std::size_t>()};
                t.question = split(jt.at("question").get<std::string>());
                if (jt.contains("golds")) t.golds = jt.at("golds").get<std::vector<std::string>>();
                r.tuples.push_back(std::move(t));
            }
            set.records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw FormatError("record line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    set.validate();
    return set;
}

void save_records(const std::string& path, const TupleSet& set) { write_file(path, records_jsonl(set)); }

TupleSet load_records(const std::string& path) { return parse_records_jsonl(read_file(path)); }

// ---------------------------------------------------------------------------
// SQuAD

std::size_t utf8_byte_offset(std::string_view text, std::size_t cp) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if ((static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) continue;  // continuation byte
        if (count == cp) return i;
        ++count;
    }
    return count == cp ? text.size() : std::string_view::npos;
}

SquadLoad parse_squad(const std::string& text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(source + ": malformed JSON: " + e.what());
    }
    SquadLoad out;
    try {
        const auto& data = doc.at("data");
        if (!data.is_array()) throw FormatError(source + ": 'data' is not an array");
        for (std::size_t a = 0; a < data.size(); ++a) {
            const auto& paragraphs = data[a].at("paragraphs");
            for (std::size_t p = 0; p < paragraphs.size(); ++p) {
                const auto& para = paragraphs[p];
                const std::string context = para.at("context").get<std::string>();
                const auto toks = tokenize_with_offsets(context);
                ContextRecord rec{"a" + std::to_string(a) + "p" + std::to_string(p), {}, {}};
                for (const auto& t : toks) rec.context.push_back(t.text);

                for (const auto& qa : para.at("qas")) {
                    ++out.total_qas;
                    const std::string id = qa.at("id").get<std::string>();
                    const auto& answers = qa.at("answers");
                    if (answers.empty()) {
                        out.quarantine.push_back({id, "no answers"});
                        continue;
                    }
                    const std::string answer = answers[0].at("text").get<std::string>();
                    const std::size_t start = utf8_byte_offset(context, answers[0].at("answer_start").get<std::size_t>());
                    if (start == std::string_view::npos || context.compare(start, answer.size(), answer) != 0) {
                        out.quarantine.push_back({id, "answer text not found at answer_start"});
                        continue;
                    }
                    const std::size_t stop = start + answer.size();
                    std::size_t first = toks.size(), last = toks.size();
                    for (std::size_t i = 0; i < toks.size(); ++i) {
                        if (toks[i].end > start && toks[i].begin < stop) {
                            if (first == toks.size()) first = i;
                            last = i;
                        }
                    }
                    if (first == toks.size()) {
                        out.quarantine.push_back({id, "answer covers no token"});
                        continue;
                    }
                    const TokenSpan span{first, last};
                    if (strip_spaces(squad_normalize(rec.span_text(span))) != strip_spaces(squad_normalize(answer))) {
                        out.quarantine.push_back({id, "answer does not align with token boundaries"});
                        continue;
                    }
                    Words question = tokenize(qa.at("question").get<std::string>());
                    if (question.empty()) {
                        out.quarantine.push_back({id, "empty question"});
                        continue;
                    }
                    if (question.back() != "?") question.push_back("?");
                    QaTuple t{id, span, std::move(question), {}};
                    for (const auto& ans : answers) t.golds.push_back(ans.at("text").get<std::string>());
                    rec.tuples.push_back(std::move(t));
                }
                if (!rec.tuples.empty()) out.set.records.push_back(std::move(rec));
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(source + ": schema violation: " + e.what());
    }
    out.set.validate();
    return out;
}

SquadLoad load_squad(const std::string& path) { return parse_squad(read_file(path), path); }

// ---------------------------------------------------------------------------
// Synthetic corpus

SyntheticTemplates SyntheticTemplates::biographies() {
    SyntheticTemplates t;
    t.female_names = split("alice carol erin grace heidi judy nina peggy sybil ursula wendy yara olga maria");
    t.male_names = split("bob dave frank ivan oscar quinn rupert trent victor xavier zane hugo leo omar");
    t.relations = {
        {"work", split("works in OBJ"), split("paris rome berlin madrid lisbon vienna prague oslo dublin athens warsaw cairo tokyo lima"),
         {split("where does S work ?"), split("in which city does S work ?")}, {split("who works in OBJ ?")}},
        {"play", split("plays the OBJ"), split("violin piano guitar drums flute cello harp trumpet"),
         {split("what does S play ?"), split("which instrument does S play ?")}, {split("who plays the OBJ ?")}},
        {"drive", split("drives a OBJ"), split("tesla volvo fiat honda toyota ford audi jeep"),
         {split("what does S drive ?"), split("which car does S drive ?")}, {split("who drives a OBJ ?")}},
        {"born", split("was born in OBJ"),
         split("january february march april may june july august september october november december"),
         {split("when was S born ?"), split("in which month was S born ?")}, {split("who was born in OBJ ?")}},
        {"eat", split("likes to eat OBJ"), split("pasta sushi tacos curry salad soup bread cheese"),
         {split("what does S like to eat ?"), split("which food does S like ?")}, {split("who likes to eat OBJ ?")}},
    };
    return t;
}

void SyntheticTemplates::validate() const {
    if (female_names.empty() || male_names.empty()) throw InvalidArgument("synthetic templates need names");
    if (relations.size() < 2) throw InvalidArgument("synthetic templates need at least two relations");
    std::set<std::string> kinds;
    for (const auto& r : relations) {
        if (std::count(r.body.begin(), r.body.end(), "OBJ") != 1) {
            throw InvalidArgument("relation '" + r.name + "' body needs exactly one OBJ slot");
        }
        if (r.objects.empty() || r.object_questions.empty()) {
            throw InvalidArgument("relation '" + r.name + "' needs objects and object questions");
        }
        for (const auto& q : r.object_questions) kinds.insert(q.front());
        for (const auto& q : r.subject_questions) kinds.insert(q.front());
    }
    for (const char* k : {"who", "where", "what"}) {
        if (!kinds.count(k)) throw InvalidArgument(std::string("synthetic templates lack a '") + k + "' question");
    }
}

SyntheticCorpus generate_synthetic(const SyntheticTemplates& templates, std::size_t n_contexts, std::size_t n_dev,
                                   std::uint64_t seed) {
    templates.validate();
    if (n_contexts < 10) throw InvalidArgument("synthetic corpus needs at least 10 contexts");
    using Triple = std::tuple<std::string, std::size_t, std::string>;
    Rng rng(derive_seed(seed, hash_string("synthetic")));
    std::set<Triple> seen;

    const std::size_t max_facts = std::min<std::size_t>(4, templates.relations.size());
    auto make = [&](const std::string& id, const std::set<Triple>* banned, std::size_t attempts) -> ContextRecord {
        for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
            const bool female = rng.below(2) == 0;
            const Words& names = female ? templates.female_names : templates.male_names;
            const std::string name = names[rng.below(names.size())];
            const std::string pronoun = female ? "she" : "he";
            const std::size_t n_facts = 2 + rng.below(max_facts - 1);
            std::vector<std::size_t> rel(templates.relations.size());
            for (std::size_t i = 0; i < rel.size(); ++i) rel[i] = i;
            rng.shuffle(rel);
            rel.resize(n_facts);

            ContextRecord r{id, {}, {}};
            std::vector<Triple> triples;
            for (std::size_t f = 0; f < n_facts; ++f) {
                const Relation& R = templates.relations[rel[f]];
                const std::string obj = R.objects[rng.below(R.objects.size())];
                triples.emplace_back(name, rel[f], obj);
                const std::size_t subject_pos = r.context.size();
                r.context.push_back(f == 0 ? name : pronoun);
                std::size_t obj_pos = 0;
                for (const auto& w : R.body) {
                    if (w == "OBJ") obj_pos = r.context.size();
                    r.context.push_back(w == "OBJ" ? obj : w);
                }
                r.context.push_back(".");

                QaTuple t;
                t.id = id + "#" + std::to_string(f);
                const bool ask_subject = f == 0 && !R.subject_questions.empty() &&
                                         rng.uniform() < templates.subject_question_rate;
                const auto& pool = ask_subject ? R.subject_questions : R.object_questions;
                for (const auto& w : pool[rng.below(pool.size())]) {
                    if (w == "S") t.question.push_back(name);
                    else if (w == "OBJ") t.question.push_back(obj);
                    else t.question.push_back(w);
                }
                t.answer = ask_subject ? TokenSpan{subject_pos, subject_pos} : TokenSpan{obj_pos, obj_pos};
                r.tuples.push_back(std::move(t));
            }
            if (banned && std::any_of(triples.begin(), triples.end(), [&](const Triple& x) { return banned->count(x); })) {
                continue;
            }
            seen.insert(triples.begin(), triples.end());
            return r;
        }
        throw InvalidArgument("could not draw a dev context disjoint from the training facts");
    };

    SyntheticCorpus out;
    char buf[32];
    for (std::size_t i = 0; i < n_contexts; ++i) {
        std::snprintf(buf, sizeof buf, "syn%05zu", i);
        out.train.records.push_back(make(buf, nullptr, 1));
    }
    const std::set<Triple> train_facts = seen;
    for (std::size_t i = 0; i < n_dev; ++i) {
        std::snprintf(buf, sizeof buf, "dev%05zu", i);
        out.dev.records.push_back(make(buf, &train_facts, 100000));
    }
    out.train.validate();
    out.dev.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Splits

HalfSplit half_split(const TupleSet& set, std::uint64_t seed) {
    const std::size_t n = set.records.size();
    if (n < 2) throw InvalidArgument("half_split needs at least two contexts");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, hash_string("half_split")));
    rng.shuffle(idx);
    const std::size_t n_sp2 = (n + 1) / 2;
    std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_sp2));
    std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(n_sp2), idx.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return {subset(set, a), subset(set, b)};
}

LabelingSplit labeling_rate_split(const TupleSet& set, double rate, double test_fraction, std::uint64_t seed) {
    if (!(rate > 0.0 && rate < 1.0)) throw InvalidArgument("labeling rate must lie in (0, 1)");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test fraction must lie in (0, 1)");
    const std::size_t n = set.records.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, hash_string("labeling_rate_split")));
    rng.shuffle(idx);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    const std::size_t rest = n - n_test;
    const auto n_labeled = static_cast<std::size_t>(std::llround(rate * static_cast<double>(rest)));
    if (n_test == 0 || n_labeled == 0 || n_labeled == rest) {
        throw InvalidArgument("corpus of " + std::to_string(n) + " contexts too small for this labeling split");
    }
    auto part = [&](std::size_t from, std::size_t count) {
        std::vector<std::size_t> v(idx.begin() + static_cast<std::ptrdiff_t>(from),
                                   idx.begin() + static_cast<std::ptrdiff_t>(from + count));
        std::sort(v.begin(), v.end());
        return v;
    };
    // Test contexts are drawn first so they do not depend on the rate.
    LabelingSplit out;
    out.test = subset(set, part(0, n_test));
    out.labeled = subset(set, part(n_test, n_labeled));
    for (std::size_t i : part(n_test + n_labeled, rest - n_labeled)) out.unlabeled.emplace_back(set.records[i]);
    return out;
}

}  // namespace coqg
