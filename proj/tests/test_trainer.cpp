// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "errors.hpp"
#include "gradcheck.hpp"
#include "rng.hpp"
#include "trainer.hpp"

using namespace coqg;
using coqg::testing::tiny_net_config;

namespace {

TupleSet fixture_data(std::size_t n) { return generate_synthetic(SyntheticTemplates::biographies(), n, 2, 5).train; }

Vocab fixture_vocab(const TupleSet& data) {
    std::vector<Words> sentences;
    for (const auto& r : data.records) {
        sentences.push_back(r.context);
        for (const auto& t : r.tuples) sentences.push_back(t.question);
    }
    return Vocab::build_from_words(sentences);
}

struct Fixture {
    TupleSet data;
    Vocab vocab;
    std::vector<FeedbackItem> items;

    explicit Fixture(std::size_t n = 12)
        : data(fixture_data(n)), vocab(fixture_vocab(data)), items(feedback_items(vocab, data)) {}

    NetConfig net(bool causal) const {
        NetConfig c = tiny_net_config(vocab.size(), causal);
        c.max_seq_len = 64;
        return c;
    }
};

class ConstantOracle final : public AnswerOracle {
public:
    explicit ConstantOracle(bool verdict) : verdict_(verdict) {}
    bool answers(const FeedbackItem&, std::span<const TokenId>) const override {
        ++calls;
        return verdict_;
    }
    std::uint64_t parameter_hash() const override { return 1234; }
    mutable std::size_t calls = 0;

private:
    bool verdict_;
};

// Accepts a fixed subset of tuples regardless of the question.
class SubsetOracle final : public AnswerOracle {
public:
    bool answers(const FeedbackItem& item, std::span<const TokenId>) const override {
        return item.id.back() == '0' || item.id.back() == '2';
    }
    std::uint64_t parameter_hash() const override { return 99; }
};

class DriftingOracle final : public AnswerOracle {
public:
    bool answers(const FeedbackItem&, std::span<const TokenId>) const override { return false; }
    std::uint64_t parameter_hash() const override { return ++hash_; }

private:
    mutable std::uint64_t hash_ = 0;
};

FeedbackSettings settings(std::size_t epochs, double replay) {
    FeedbackSettings s;
    s.train.feedback_epochs = epochs;
    s.train.replay_fraction = replay;
    s.train.batch_size = 4;
    s.train.seed = 3;
    s.sampler.max_question_len = 8;
    s.sampler.rng_seed = 3;
    return s;
}

}  // namespace

TEST_CASE("train config json round trip and validation") {
    TrainConfig c;
    c.criterion = Criterion::F1;
    c.tau = 0.6;
    c.seed = 77;
    const TrainConfig back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    c.tau = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.replay_fraction = 1.5;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("partition stays disjoint and replays from its log") {
    Rng rng(12);
    FeedbackPartition p(50);
    CHECK(p.unanswerable().size() == 50);
    std::size_t changes = 0;
    for (std::size_t it = 0; it < 2000; ++it) {
        const std::size_t t = rng.below(50);
        const bool a = rng.below(2) == 0;
        const bool was = p.is_answerable(t);
        const bool moved = p.place(t, a, it);
        CHECK(moved == (was != a));
        changes += moved;
        CHECK(p.answerable().size() + p.unanswerable().size() == 50);
    }
    CHECK_NOTHROW(p.check_invariants());
    CHECK(p.transitions().size() == changes);
    const FeedbackPartition folded = FeedbackPartition::replay(50, p.transitions());
    CHECK(folded.answerable() == p.answerable());
    CHECK(folded.unanswerable() == p.unanswerable());

    std::vector<Transition> bad = {{0, 3, Direction::ToUnanswerable}};
    CHECK_THROWS_AS(FeedbackPartition::replay(50, bad), InvariantError);
    CHECK_THROWS_AS(p.place(50, true, 0), InvalidArgument);
}

TEST_CASE("observer fires after every membership change") {
    FeedbackPartition p(5);
    std::size_t seen = 0;
    p.set_observer([&](const FeedbackPartition& q) {
        ++seen;
        CHECK_NOTHROW(q.check_invariants());
    });
    p.place(1, true, 0);
    p.place(1, true, 0);
    p.place(1, false, 0);
    CHECK(seen == 2);
}

TEST_CASE("answer criteria") {
    const Words ctx = {"john", "smith", "jr", "and", "john", "smith", "junior", "iii"};
    CHECK(answer_correct({0, 1}, {4, 5}, ctx, Criterion::ExactSpan, 0.8));
    CHECK_FALSE(answer_correct({0, 2}, {4, 7}, ctx, Criterion::ExactSpan, 0.8));
    // "john smith jr" against "john smith junior iii": P 2/3, R 1/2, F1 4/7.
    CHECK(answer_correct({0, 2}, {4, 7}, ctx, Criterion::F1, 0.57));
    CHECK_FALSE(answer_correct({0, 2}, {4, 7}, ctx, Criterion::F1, 0.58));
    CHECK(answer_correct({0, 2}, {4, 7}, ctx, Criterion::F1, 4.0 / 7.0));
}

TEST_CASE("a perfect oracle leaves the generator untouched") {
    Fixture f;
    DecoderLM qg(f.net(true), 4);
    const auto before = qg.parameters().value_hash();
    ConstantOracle yes(true);
    const CollabResult r = run_collaborative(qg, f.vocab, yes, f.items, settings(3, 0.5));
    CHECK(qg.parameters().value_hash() == before);
    CHECK(r.partition.answerable().size() == f.items.size());
    CHECK(r.qa_hash_before == r.qa_hash_after);
    for (const auto& s : r.stats) CHECK(s.mean_feedback_loss == 0.0);
    // Every tuple moves in once, in the first epoch.
    CHECK(r.stats[0].transitions_in == f.items.size());
    CHECK(r.stats[1].transitions_in == 0);
    CHECK(r.stats[0].probed == static_cast<std::size_t>(std::ceil(0.5 * f.items.size())));
}

TEST_CASE("a rejecting oracle trains on every gold question") {
    Fixture f;
    DecoderLM qg(f.net(true), 4);
    const auto before = qg.parameters().value_hash();
    ConstantOracle no(false);
    const CollabResult r = run_collaborative(qg, f.vocab, no, f.items, settings(2, 0.25));
    CHECK(qg.parameters().value_hash() != before);
    CHECK(r.partition.answerable().empty());
    CHECK(r.partition.transitions().empty());
    CHECK(no.calls == 2 * f.items.size());
    CHECK(r.stats[0].mean_feedback_loss > 0.0);
    CHECK(r.stats[0].probed == 0);
}

TEST_CASE("replay fraction zero never probes") {
    Fixture f;
    DecoderLM qg(f.net(true), 4);
    SubsetOracle some;
    const CollabResult r = run_collaborative(qg, f.vocab, some, f.items, settings(2, 0.0));
    CHECK(r.partition.probes().empty());
    CHECK_FALSE(r.partition.answerable().empty());
    CHECK_FALSE(r.partition.unanswerable().empty());
}

TEST_CASE("replay probes ceil(fraction * |X_a|) tuples and moves failures back") {
    Fixture f;
    DecoderLM qg(f.net(true), 4);
    FeedbackPartition p(f.items.size());
    for (std::size_t i = 0; i < 7; ++i) p.place(i, true, 0);
    ConstantOracle no(false);
    const std::size_t failed = replay_probe(qg, f.vocab, no, f.items, p, settings(1, 0.3), 1);
    CHECK(failed == 3);  // ceil(0.3 * 7)
    CHECK(p.probes().size() == 3);
    CHECK(p.answerable().size() == 4);
    CHECK_NOTHROW(p.check_invariants());
}

TEST_CASE("a changing QA hash aborts the run") {
    Fixture f;
    DecoderLM qg(f.net(true), 4);
    DriftingOracle drift;
    CHECK_THROWS_AS(run_collaborative(qg, f.vocab, drift, f.items, settings(1, 0.0)), InvariantError);
}

TEST_CASE("collaborative runs are deterministic and log every mutation") {
    Fixture f;
    SpanQaNet qa(f.net(false), 8);
    const SpanQaOracle oracle(qa, f.vocab, Criterion::F1, 0.5, 12);
    std::size_t mutations = 0;
    FeedbackSettings s = settings(3, 0.5);
    s.sampler.k = 3;
    s.on_mutation = [&](const FeedbackPartition& p) {
        ++mutations;
        CHECK(p.answerable().size() + p.unanswerable().size() == p.size());
    };
    DecoderLM a(f.net(true), 4), b(f.net(true), 4);
    const CollabResult ra = run_collaborative(a, f.vocab, oracle, f.items, s);
    const CollabResult rb = run_collaborative(b, f.vocab, oracle, f.items, s);
    CHECK(a.parameters().value_hash() == b.parameters().value_hash());
    CHECK(ra.partition.transitions() == rb.partition.transitions());
    CHECK(mutations == 2 * ra.partition.transitions().size());
}

TEST_CASE("pre-training overfits a handful of tuples") {
    Fixture f(10);
    TrainConfig c;
    c.pretrain_epochs = 60;
    c.batch_size = 4;
    c.qg_lr = 3e-3;
    c.qa_lr = 3e-3;
    c.seed = 1;
    DecoderLM qg(f.net(true), 2);
    const LossCurve qgc = pretrain_qg(qg, f.vocab, f.data, c);
    CHECK(qgc.epochs.size() == 60);
    CHECK(qgc.final < 0.25 * qgc.initial);
    CHECK(qgc.final == doctest::Approx(mean_qg_loss(qg, f.vocab, f.data)));

    SpanQaNet qa(f.net(false), 2);
    const LossCurve qac = pretrain_qa(qa, f.vocab, f.data, c);
    CHECK(qac.final < 0.1 * qac.initial);
    const QaEvaluation ev = evaluate_qa(qa, f.vocab, f.data, 12);
    CHECK(ev.count == f.data.tuple_count());
    CHECK(ev.em == 1.0);
    CHECK(ev.f1 == 1.0);
}

TEST_CASE("pre-training is reproducible") {
    Fixture f(10);
    TrainConfig c;
    c.pretrain_epochs = 2;
    c.batch_size = 4;
    c.seed = 5;
    DecoderLM a(f.net(true), 2), b(f.net(true), 2);
    pretrain_qg(a, f.vocab, f.data, c);
    pretrain_qg(b, f.vocab, f.data, c);
    CHECK(a.parameters().value_hash() == b.parameters().value_hash());
}
