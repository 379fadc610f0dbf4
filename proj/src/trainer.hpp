// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Supervised pre-training of both networks and the collaborative loop in
// which a frozen QA model decides which generated questions are answerable.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "nets.hpp"
#include "sampler.hpp"

namespace coqg {

enum class Criterion { ExactSpan, F1 };

struct TrainConfig {
    std::size_t pretrain_epochs = 2;
    std::size_t feedback_epochs = 10;
    std::size_t batch_size = 16;
    double replay_fraction = 0.25;
    Criterion criterion = Criterion::ExactSpan;
    double tau = 0.8;
    double qg_lr = 1e-3;
    double qa_lr = 1e-3;
    double feedback_lr = 1e-3;
    std::size_t max_answer_len = 12;
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

struct LossCurve {
    double initial = 0.0;          // untrained model, no dropout
    std::vector<double> epochs;    // mean training loss per epoch
    double final = 0.0;            // trained model, no dropout
    std::size_t skipped = 0;       // tuples that did not fit the network
};

LossCurve pretrain_qg(DecoderLM& model, const Vocab& vocab, const TupleSet& data, const TrainConfig& cfg);
LossCurve pretrain_qa(SpanQaNet& model, const Vocab& vocab, const TupleSet& data, const TrainConfig& cfg);

// Mean loss without dropout; the QA variant skips tuples whose answer was
// truncated away.
double mean_qg_loss(const DecoderLM& model, const Vocab& vocab, const TupleSet& data);
double mean_qa_loss(const SpanQaNet& model, const Vocab& vocab, const TupleSet& data);

bool answer_correct(TokenSpan pred, TokenSpan gold, std::span<const std::string> context, Criterion criterion,
                    double tau);

struct QaEvaluation {
    double em = 0.0;
    double f1 = 0.0;
    std::size_t count = 0;
};
QaEvaluation evaluate_qa(const SpanQaNet& model, const Vocab& vocab, const TupleSet& data, std::size_t max_answer_len);

// ---------------------------------------------------------------------------
// Collaborative loop

// One context-answer tuple, pre-encoded.
struct FeedbackItem {
    std::string id;
    Words context_words;
    TokenSequence context;
    TokenSpan answer;
    TokenSequence gold_question;
};
std::vector<FeedbackItem> feedback_items(const Vocab& vocab, const TupleSet& data);

// Judges a generated question. Implementations must not change any state
// that influences later judgments.
class AnswerOracle {
public:
    virtual ~AnswerOracle() = default;
    virtual bool answers(const FeedbackItem& item, std::span<const TokenId> question) const = 0;
    virtual std::uint64_t parameter_hash() const = 0;
};

class SpanQaOracle final : public AnswerOracle {
public:
    SpanQaOracle(const SpanQaNet& model, const Vocab& vocab, Criterion criterion, double tau,
                 std::size_t max_answer_len)
        : model_(model), vocab_(vocab), criterion_(criterion), tau_(tau), max_answer_len_(max_answer_len) {}
    bool answers(const FeedbackItem& item, std::span<const TokenId> question) const override;
    std::uint64_t parameter_hash() const override { return model_.parameters().value_hash(); }

private:
    const SpanQaNet& model_;
    const Vocab& vocab_;
    Criterion criterion_;
    double tau_;
    std::size_t max_answer_len_;
};

enum class Direction { ToAnswerable, ToUnanswerable };

struct Transition {
    std::size_t iteration;
    std::size_t tuple;
    Direction direction;
    friend bool operator==(const Transition&, const Transition&) = default;
};

struct Probe {
    std::size_t iteration;
    std::size_t tuple;
    bool still_answerable;
};

// X_a / X_-a over tuple indices 0..n-1. Every tuple starts unanswerable.
class FeedbackPartition {
public:
    explicit FeedbackPartition(std::size_t n_tuples);

    std::size_t size() const { return membership_.size(); }
    bool is_answerable(std::size_t tuple) const;
    const std::set<std::size_t>& answerable() const { return answerable_; }
    const std::set<std::size_t>& unanswerable() const { return unanswerable_; }
    const std::vector<Transition>& transitions() const { return log_; }
    const std::vector<Probe>& probes() const { return probes_; }

    // Moves the tuple if needed; returns true when membership changed.
    bool place(std::size_t tuple, bool answerable, std::size_t iteration);
    void record_probe(std::size_t tuple, bool still_answerable, std::size_t iteration);
    void check_invariants() const;
    // Called after every membership change.
    void set_observer(std::function<void(const FeedbackPartition&)> observer) { observer_ = std::move(observer); }

    // Folds a transition log over the all-unanswerable start state.
    static FeedbackPartition replay(std::size_t n_tuples, std::span<const Transition> log);

private:
    std::vector<std::uint8_t> membership_;
    std::set<std::size_t> answerable_, unanswerable_;
    std::vector<Transition> log_;
    std::vector<Probe> probes_;
    std::function<void(const FeedbackPartition&)> observer_;
};

struct EpochStats {
    std::size_t epoch = 0;
    std::size_t answerable = 0;
    std::size_t unanswerable = 0;
    std::size_t transitions_in = 0;   // into X_a, feedback pass and replay together
    std::size_t transitions_out = 0;  // into X_-a
    double mean_feedback_loss = 0.0;
    std::size_t probed = 0;
    std::size_t probe_failures = 0;

    std::string to_json() const;
};

struct FeedbackSettings {
    TrainConfig train;
    SamplerConfig sampler;
    std::function<void(const FeedbackPartition&)> on_mutation;  // optional
};

// Generates with the epoch-start generator, judges every tuple, then takes
// Adam steps on the gold-question loss of the failures only.
EpochStats feedback_epoch(DecoderLM& qg, const Vocab& vocab, const AnswerOracle& qa,
                          std::span<const FeedbackItem> items, FeedbackPartition& partition,
                          const FeedbackSettings& settings, std::size_t epoch);

// Re-judges ceil(fraction * |X_a|) answerable tuples; failures move back.
std::size_t replay_probe(const DecoderLM& qg, const Vocab& vocab, const AnswerOracle& qa,
                         std::span<const FeedbackItem> items, FeedbackPartition& partition,
                         const FeedbackSettings& settings, std::size_t epoch);

struct CollabResult {
    FeedbackPartition partition{0};
    std::vector<EpochStats> stats;
    std::uint64_t qa_hash_before = 0;
    std::uint64_t qa_hash_after = 0;
};

// Alternates feedback_epoch and replay_probe. When out_dir is set, appends
// stats.jsonl and writes qg_epoch<N>.ckpt after each epoch.
CollabResult run_collaborative(DecoderLM& qg, const Vocab& vocab, const AnswerOracle& qa,
                               std::span<const FeedbackItem> items, const FeedbackSettings& settings,
                               const std::string& out_dir = {});

}  // namespace coqg
