// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "json.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace coqg {

using json = nlohmann::json;

namespace {

std::uint64_t key(const char* s) { return hash_string(s); }

using LossFn = std::function<ad::Var(ad::Tape&, std::size_t, const ForwardOptions&)>;

// Minibatch Adam over n examples; returns mean training loss per epoch.
std::vector<double> train_epochs(ParameterStore& store, std::size_t n, const LossFn& loss, std::size_t epochs,
                                 std::size_t batch_size, double lr, Rng& order, Rng& dropout) {
    std::vector<double> curve;
    std::vector<std::size_t> idx(n);
    AdamConfig adam;
    adam.lr = lr;
    const ForwardOptions opts{true, &dropout};
    for (std::size_t e = 0; e < epochs; ++e) {
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        order.shuffle(idx);
        double total = 0.0;
        for (std::size_t b = 0; b < n; b += batch_size) {
            const std::size_t end = std::min(n, b + batch_size);
            const double w = 1.0 / static_cast<double>(end - b);
            for (std::size_t i = b; i < end; ++i) {
                ad::Tape tape;
                ad::Var l = loss(tape, idx[i], opts);
                total += l.value()[0];
                tape.backward(l, w);
            }
            adam_step(store, adam);
        }
        curve.push_back(total / static_cast<double>(n));
    }
    return curve;
}

double mean_eval(std::size_t n, const LossFn& loss) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ad::Tape tape(false);
        total += loss(tape, i, {}).value()[0];
    }
    return total / static_cast<double>(n);
}

bool fits_decoder(const NetConfig& cfg, const QgInput& in) { return in.ids.size() - 1 <= cfg.max_seq_len; }

std::vector<QgInput> qg_examples(const NetConfig& cfg, const Vocab& vocab, const TupleSet& data, std::size_t& skipped) {
    std::vector<QgInput> out;
    for (const auto& r : data.records) {
        const TokenSequence ctx = vocab.encode_words(r.context);
        for (const auto& t : r.tuples) {
            const TokenSequence q = vocab.encode_words(t.question);
            QgInput in = format_qg_input(vocab, ctx, t.answer, std::span<const TokenId>(q));
            if (fits_decoder(cfg, in)) out.push_back(std::move(in));
            else ++skipped;
        }
    }
    return out;
}

struct QaExample {
    QaInput input;
    TokenSpan gold;
};

std::vector<QaExample> qa_examples(const NetConfig& cfg, const Vocab& vocab, const TupleSet& data, std::size_t& skipped) {
    std::vector<QaExample> out;
    for (const auto& r : data.records) {
        const TokenSequence ctx = vocab.encode_words(r.context);
        for (const auto& t : r.tuples) {
            const TokenSequence q = vocab.encode_words(t.question);
            try {
                QaInput in = format_qa_input(vocab, ctx, q, cfg.max_seq_len);
                if (t.answer.end < in.context_length) {
                    out.push_back({std::move(in), t.answer});
                    continue;
                }
            } catch (const DimensionError&) {
            }
            ++skipped;
        }
    }
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
    if (!(replay_fraction >= 0.0 && replay_fraction <= 1.0)) throw InvalidArgument("replay_fraction must lie in [0, 1]");
    if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("tau must lie in (0, 1]");
    if (!(qg_lr > 0.0 && qa_lr > 0.0 && feedback_lr > 0.0)) throw InvalidArgument("learning rates must be positive");
    if (max_answer_len == 0) throw InvalidArgument("max_answer_len must be positive");
}

std::string TrainConfig::to_json() const {
    json j = {{"pretrain_epochs", pretrain_epochs},
              {"feedback_epochs", feedback_epochs},
              {"batch_size", batch_size},
              {"replay_fraction", replay_fraction},
              {"criterion", criterion == Criterion::ExactSpan ? "exact_span" : "f1"},
              {"tau", tau},
              {"qg_lr", qg_lr},
              {"qa_lr", qa_lr},
              {"feedback_lr", feedback_lr},
              {"max_answer_len", max_answer_len},
              {"seed", seed}};
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    TrainConfig c;
    try {
        const json j = json::parse(text);
        c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
        c.feedback_epochs = j.value("feedback_epochs", c.feedback_epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.replay_fraction = j.value("replay_fraction", c.replay_fraction);
        const std::string crit = j.value("criterion", std::string("exact_span"));
        if (crit == "exact_span") c.criterion = Criterion::ExactSpan;
        else if (crit == "f1") c.criterion = Criterion::F1;
        else throw InvalidArgument("unknown correctness criterion '" + crit + "'");
        c.tau = j.value("tau", c.tau);
        c.qg_lr = j.value("qg_lr", c.qg_lr);
        c.qa_lr = j.value("qa_lr", c.qa_lr);
        c.feedback_lr = j.value("feedback_lr", c.feedback_lr);
        c.max_answer_len = j.value("max_answer_len", c.max_answer_len);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed training config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Pre-training

LossCurve pretrain_qg(DecoderLM& model, const Vocab& vocab, const TupleSet& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.tuple_count() == 0) throw InvalidArgument("pretrain_qg: no tuples to train on");
    LossCurve curve;
    const auto examples = qg_examples(model.config(), vocab, data, curve.skipped);
    if (examples.empty()) throw InvalidArgument("pretrain_qg: no tuple fits max_seq_len");
    const LossFn loss = [&](ad::Tape& tape, std::size_t i, const ForwardOptions& o) {
        return qg_loss(tape, model, examples[i], o);
    };
    curve.initial = mean_eval(examples.size(), loss);
    Rng order(derive_seed(cfg.seed, key("qg-order"))), dropout(derive_seed(cfg.seed, key("qg-dropout")));
    curve.epochs = train_epochs(model.parameters(), examples.size(), loss, cfg.pretrain_epochs, cfg.batch_size,
                                cfg.qg_lr, order, dropout);
    curve.final = mean_eval(examples.size(), loss);
    return curve;
}

LossCurve pretrain_qa(SpanQaNet& model, const Vocab& vocab, const TupleSet& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.tuple_count() == 0) throw InvalidArgument("pretrain_qa: no tuples to train on");
    LossCurve curve;
    const auto examples = qa_examples(model.config(), vocab, data, curve.skipped);
    if (examples.empty()) throw InvalidArgument("pretrain_qa: no tuple fits max_seq_len");
    const LossFn loss = [&](ad::Tape& tape, std::size_t i, const ForwardOptions& o) {
        return qa_span_loss(tape, model, examples[i].input, examples[i].gold, o);
    };
    curve.initial = mean_eval(examples.size(), loss);
    Rng order(derive_seed(cfg.seed, key("qa-order"))), dropout(derive_seed(cfg.seed, key("qa-dropout")));
    curve.epochs = train_epochs(model.parameters(), examples.size(), loss, cfg.pretrain_epochs, cfg.batch_size,
                                cfg.qa_lr, order, dropout);
    curve.final = mean_eval(examples.size(), loss);
    return curve;
}

double mean_qg_loss(const DecoderLM& model, const Vocab& vocab, const TupleSet& data) {
    std::size_t skipped = 0;
    const auto examples = qg_examples(model.config(), vocab, data, skipped);
    if (examples.empty()) throw InvalidArgument("mean_qg_loss: nothing to evaluate");
    return mean_eval(examples.size(),
                     [&](ad::Tape& t, std::size_t i, const ForwardOptions& o) { return qg_loss(t, model, examples[i], o); });
}

double mean_qa_loss(const SpanQaNet& model, const Vocab& vocab, const TupleSet& data) {
    std::size_t skipped = 0;
    const auto examples = qa_examples(model.config(), vocab, data, skipped);
    if (examples.empty()) throw InvalidArgument("mean_qa_loss: nothing to evaluate");
    return mean_eval(examples.size(), [&](ad::Tape& t, std::size_t i, const ForwardOptions& o) {
        return qa_span_loss(t, model, examples[i].input, examples[i].gold, o);
    });
}

bool answer_correct(TokenSpan pred, TokenSpan gold, std::span<const std::string> context, Criterion criterion,
                    double tau) {
    auto text = [&](TokenSpan s) {
        if (s.start > s.end || s.end >= context.size()) throw InvalidArgument("answer_correct: span outside context");
        std::string out;
        for (std::size_t i = s.start; i <= s.end; ++i) out += (i > s.start ? " " : "") + context[i];
        return out;
    };
    const std::string p = text(pred), g = text(gold);
    if (criterion == Criterion::ExactSpan) return exact_match(p, g) == 1.0;
    return token_f1(p, g) >= tau;
}

QaEvaluation evaluate_qa(const SpanQaNet& model, const Vocab& vocab, const TupleSet& data, std::size_t max_answer_len) {
    QaEvaluation ev;
    for (const auto& r : data.records) {
        const TokenSequence ctx = vocab.encode_words(r.context);
        for (const auto& t : r.tuples) {
            const auto golds = r.gold_answers(t);
            std::string pred;
            try {
                const QaInput in = format_qa_input(vocab, ctx, vocab.encode_words(t.question), model.config().max_seq_len);
                const SpanPrediction p = qa_predict_span(model, in, max_answer_len);
                pred = r.span_text({p.start, p.end});
            } catch (const DimensionError&) {
            }
            ev.em += exact_match(pred, golds);
            ev.f1 += token_f1(pred, golds);
            ++ev.count;
        }
    }
    if (ev.count == 0) throw InvalidArgument("evaluate_qa: no tuples");
    ev.em /= static_cast<double>(ev.count);
    ev.f1 /= static_cast<double>(ev.count);
    return ev;
}

// ---------------------------------------------------------------------------
// Collaborative loop

std::vector<FeedbackItem> feedback_items(const Vocab& vocab, const TupleSet& data) {
    std::vector<FeedbackItem> items;
    for (const auto& r : data.records) {
        const TokenSequence ctx = vocab.encode_words(r.context);
        for (const auto& t : r.tuples) items.push_back({t.id, r.context, ctx, t.answer, vocab.encode_words(t.question)});
    }
    return items;
}

bool SpanQaOracle::answers(const FeedbackItem& item, std::span<const TokenId> question) const {
    QaInput in;
    try {
        in = format_qa_input(vocab_, item.context, question, model_.config().max_seq_len);
    } catch (const Error&) {
        return false;
    }
    const SpanPrediction p = qa_predict_span(model_, in, max_answer_len_);
    if (item.answer.end >= item.context_words.size()) return false;
    return answer_correct({p.start, p.end}, item.answer, item.context_words, criterion_, tau_);
}

FeedbackPartition::FeedbackPartition(std::size_t n_tuples) : membership_(n_tuples, 0) {
    for (std::size_t i = 0; i < n_tuples; ++i) unanswerable_.insert(unanswerable_.end(), i);
}

bool FeedbackPartition::is_answerable(std::size_t tuple) const {
    if (tuple >= membership_.size()) throw InvalidArgument("tuple index outside partition");
    return membership_[tuple] != 0;
}

bool FeedbackPartition::place(std::size_t tuple, bool answerable, std::size_t iteration) {
    if (is_answerable(tuple) == answerable) return false;
    membership_[tuple] = answerable ? 1 : 0;
    if (answerable) {
        unanswerable_.erase(tuple);
        answerable_.insert(tuple);
    } else {
        answerable_.erase(tuple);
        unanswerable_.insert(tuple);
    }
    log_.push_back({iteration, tuple, answerable ? Direction::ToAnswerable : Direction::ToUnanswerable});
    if (answerable_.size() + unanswerable_.size() != membership_.size() ||
        answerable_.count(tuple) == unanswerable_.count(tuple)) {
        throw InvariantError("partition broken by moving tuple " + std::to_string(tuple));
    }
    if (observer_) observer_(*this);
    return true;
}

void FeedbackPartition::record_probe(std::size_t tuple, bool still_answerable, std::size_t iteration) {
    probes_.push_back({iteration, tuple, still_answerable});
}

void FeedbackPartition::check_invariants() const {
    if (answerable_.size() + unanswerable_.size() != membership_.size()) {
        throw InvariantError("partition sizes " + std::to_string(answerable_.size()) + " + " +
                             std::to_string(unanswerable_.size()) + " do not cover " +
                             std::to_string(membership_.size()) + " tuples");
    }
    for (std::size_t i = 0; i < membership_.size(); ++i) {
        const bool a = answerable_.count(i) != 0, u = unanswerable_.count(i) != 0;
        if (a == u) throw InvariantError("tuple " + std::to_string(i) + (a ? " in both sets" : " in neither set"));
        if (a != (membership_[i] != 0)) throw InvariantError("membership of tuple " + std::to_string(i) + " is stale");
    }
}

FeedbackPartition FeedbackPartition::replay(std::size_t n_tuples, std::span<const Transition> log) {
    FeedbackPartition p(n_tuples);
    for (const auto& t : log) {
        if (!p.place(t.tuple, t.direction == Direction::ToAnswerable, t.iteration)) {
            throw InvariantError("transition log moves tuple " + std::to_string(t.tuple) + " into its own set");
        }
    }
    return p;
}

std::string EpochStats::to_json() const {
    return json{{"epoch", epoch},
                {"answerable", answerable},
                {"unanswerable", unanswerable},
                {"transitions_in", transitions_in},
                {"transitions_out", transitions_out},
                {"mean_feedback_loss", mean_feedback_loss},
                {"probed", probed},
                {"probe_failures", probe_failures}}
        .dump();
}

namespace {

bool judge(const DecoderLM& qg, const Vocab& vocab, const AnswerOracle& qa, const FeedbackItem& item,
           const SamplerConfig& sampler, std::uint64_t stream) {
    Rng rng(stream);
    try {
        const GeneratedQuestion q = sample_question(qg, vocab, item.context, item.answer, sampler, rng);
        return qa.answers(item, q.tokens);
    } catch (const DimensionError&) {
        return false;
    }
}

}  // namespace

EpochStats feedback_epoch(DecoderLM& qg, const Vocab& vocab, const AnswerOracle& qa,
                          std::span<const FeedbackItem> items, FeedbackPartition& partition,
                          const FeedbackSettings& settings, std::size_t epoch) {
    const TrainConfig& cfg = settings.train;
    if (partition.size() != items.size()) throw InvariantError("partition does not match the tuple set");
    partition.check_invariants();

    EpochStats st;
    st.epoch = epoch;
    std::vector<std::size_t> failures;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::uint64_t stream = derive_seed(settings.sampler.rng_seed, hash_string(items[i].id), epoch);
        const bool ok = judge(qg, vocab, qa, items[i], settings.sampler, stream);
        if (partition.place(i, ok, epoch)) ++(ok ? st.transitions_in : st.transitions_out);
        if (!ok) failures.push_back(i);
    }
    partition.check_invariants();

    std::vector<QgInput> gold;
    for (std::size_t i : failures) {
        QgInput in = format_qg_input(vocab, items[i].context, items[i].answer,
                                     std::span<const TokenId>(items[i].gold_question));
        if (fits_decoder(qg.config(), in)) gold.push_back(std::move(in));
    }
    if (!gold.empty()) {
        const LossFn loss = [&](ad::Tape& tape, std::size_t i, const ForwardOptions& o) {
            return qg_loss(tape, qg, gold[i], o);
        };
        Rng order(derive_seed(cfg.seed, key("feedback-order"), epoch));
        Rng dropout(derive_seed(cfg.seed, key("feedback-dropout"), epoch));
        st.mean_feedback_loss =
            train_epochs(qg.parameters(), gold.size(), loss, 1, cfg.batch_size, cfg.feedback_lr, order, dropout)[0];
    }
    st.answerable = partition.answerable().size();
    st.unanswerable = partition.unanswerable().size();
    return st;
}

std::size_t replay_probe(const DecoderLM& qg, const Vocab& vocab, const AnswerOracle& qa,
                         std::span<const FeedbackItem> items, FeedbackPartition& partition,
                         const FeedbackSettings& settings, std::size_t epoch) {
    partition.check_invariants();
    std::vector<std::size_t> pool(partition.answerable().begin(), partition.answerable().end());
    const auto n = static_cast<std::size_t>(std::ceil(settings.train.replay_fraction * static_cast<double>(pool.size())));
    if (n == 0) return 0;
    Rng rng(derive_seed(settings.train.seed, key("replay"), epoch));
    for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(n);
    std::sort(pool.begin(), pool.end());

    std::size_t failures = 0;
    for (std::size_t t : pool) {
        const std::uint64_t stream =
            derive_seed(settings.sampler.rng_seed, hash_string(items[t].id), epoch, key("replay"));
        const bool ok = judge(qg, vocab, qa, items[t], settings.sampler, stream);
        partition.record_probe(t, ok, epoch);
        if (!ok) {
            partition.place(t, false, epoch);
            ++failures;
        }
        partition.check_invariants();
    }
    return failures;
}

CollabResult run_collaborative(DecoderLM& qg, const Vocab& vocab, const AnswerOracle& qa,
                               std::span<const FeedbackItem> items, const FeedbackSettings& settings,
                               const std::string& out_dir) {
    settings.train.validate();
    settings.sampler.validate(qg.config().vocab_size);
    CollabResult res;
    res.partition = FeedbackPartition(items.size());
    if (settings.on_mutation) res.partition.set_observer(settings.on_mutation);
    res.qa_hash_before = qa.parameter_hash();
    std::string stats_log;
    for (std::size_t e = 1; e <= settings.train.feedback_epochs; ++e) {
        EpochStats st = feedback_epoch(qg, vocab, qa, items, res.partition, settings, e);
        const std::size_t probed_before = res.partition.probes().size();
        st.probe_failures = replay_probe(qg, vocab, qa, items, res.partition, settings, e);
        st.probed = res.partition.probes().size() - probed_before;
        st.transitions_out += st.probe_failures;
        st.answerable = res.partition.answerable().size();
        st.unanswerable = res.partition.unanswerable().size();
        res.partition.check_invariants();
        if (qa.parameter_hash() != res.qa_hash_before) {
            throw InvariantError("QA parameters changed during feedback epoch " + std::to_string(e));
        }
        if (!out_dir.empty()) {
            stats_log += st.to_json() + "\n";
            write_file(out_dir + "/stats.jsonl", stats_log);
            qg.save(out_dir + "/qg_epoch" + std::to_string(e) + ".ckpt");
        }
        res.stats.push_back(st);
    }
    res.qa_hash_after = qa.parameter_hash();
    if (res.qa_hash_after != res.qa_hash_before) throw InvariantError("QA parameters changed during the collaborative run");
    const FeedbackPartition folded = FeedbackPartition::replay(items.size(), res.partition.transitions());
    if (folded.answerable() != res.partition.answerable()) {
        throw InvariantError("transition log does not reproduce the final partition");
    }
    return res;
}

}  // namespace coqg
