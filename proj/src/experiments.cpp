// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "json.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace coqg {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<Protocol, std::string>>& protocol_names() {
    static const std::vector<std::pair<Protocol, std::string>> names = {
        {Protocol::Pretrain, "pretrain"},   {Protocol::Collab, "collab"},     {Protocol::Generate, "generate"},
        {Protocol::Surrogate, "surrogate"}, {Protocol::Semisup, "semisup"},   {Protocol::Ablation, "ablation"},
        {Protocol::Metrics, "metrics"},     {Protocol::SynthData, "synth-data"}};
    return names;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t key(std::string_view s) { return hash_string(s); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw FormatError(where + " must be an object");
    for (const auto& [k, _] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end()) {
            throw FormatError("unknown key '" + k + "' in " + where);
        }
    }
}

class Stopwatch {
public:
    void mark(const std::string& stage) {
        const auto now = std::chrono::steady_clock::now();
        log_[stage] = std::chrono::duration<double>(now - last_).count();
        last_ = now;
    }
    const json& log() const { return log_; }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
    json log_ = json::object();
};

json curve_json(const LossCurve& c) {
    return {{"initial_loss", c.initial}, {"epoch_losses", c.epochs}, {"final_loss", c.final}, {"skipped", c.skipped}};
}

json qa_eval_json(const QaEvaluation& e) { return {{"em", e.em}, {"f1", e.f1}, {"count", e.count}}; }

NetConfig net_for(const ExperimentConfig& cfg, const Vocab& vocab, bool causal) {
    NetConfig n = cfg.net;
    n.vocab_size = vocab.size();
    n.causal = causal;
    n.validate();
    return n;
}

struct Workspace {
    const ExperimentConfig& cfg;
    CorpusData corpus;
    Vocab vocab;
    HalfSplit split;
    fs::path dir;

    const TupleSet& pretrain_set() const { return cfg.pretrain_on == "train" ? corpus.train : split.sp2; }
};

Workspace open_workspace(const ExperimentConfig& cfg) {
    CorpusData corpus = load_corpus(cfg.corpus);
    Vocab vocab = build_vocab(corpus.train);
    HalfSplit split = half_split(corpus.train, derive_seed(cfg.seed, key("split")));
    return {cfg, std::move(corpus), std::move(vocab), std::move(split), fs::path(cfg.out_dir)};
}

// Greedy generation for every tuple of a set; failed records are dropped
// from the returned set and counted.
struct Generated {
    TupleSet set;
    GenerationBatch batch;
};

Generated generate_questions(const DecoderLM& qg, const Vocab& vocab, const TupleSet& src, const SamplerConfig& sampler) {
    std::vector<GenerationRequest> reqs;
    for (const auto& r : src.records)
        for (const auto& t : r.tuples) reqs.push_back({t.id, r.id, r.context, t.answer});
    Generated g;
    g.batch = batch_generate(qg, vocab, reqs, sampler);
    std::size_t k = 0;
    for (const auto& r : src.records) {
        ContextRecord out{r.id, r.context, {}};
        for (const auto& t : r.tuples) {
            if (k < g.batch.results.size() && g.batch.results[k].record_id == t.id) {
                out.tuples.push_back({t.id, t.answer, g.batch.results[k].question, t.golds});
                ++k;
            }
        }
        if (!out.tuples.empty()) g.set.records.push_back(std::move(out));
    }
    return g;
}

MetricReport generation_report(const Generated& g, const TupleSet& gold) {
    std::vector<GenerationPair> pairs;
    std::size_t k = 0;
    for (const auto& r : gold.records) {
        for (const auto& t : r.tuples) {
            if (k < g.batch.results.size() && g.batch.results[k].record_id == t.id) {
                pairs.push_back({g.batch.results[k].question, t.question});
                ++k;
            }
        }
    }
    if (pairs.empty()) throw InvalidArgument("no generated questions to score");
    return make_report(pairs, {});
}

TupleSet merge(const TupleSet& a, const TupleSet& b) {
    TupleSet out = a;
    out.records.insert(out.records.end(), b.records.begin(), b.records.end());
    return out;
}

struct PretrainedPair {
    DecoderLM qg;
    SpanQaNet qa;
    LossCurve qg_curve, qa_curve;
};

PretrainedPair pretrain_pair(const ExperimentConfig& cfg, const Vocab& vocab, const TupleSet& data, bool causal_qa,
                             std::uint64_t salt) {
    PretrainedPair p{DecoderLM(net_for(cfg, vocab, true), derive_seed(cfg.seed, key("qg-init"), salt)),
                     SpanQaNet(net_for(cfg, vocab, causal_qa), derive_seed(cfg.seed, key("qa-init"), salt)),
                     {},
                     {}};
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, key("pretrain"), salt);
    p.qg_curve = pretrain_qg(p.qg, vocab, data, tc);
    p.qa_curve = pretrain_qa(p.qa, vocab, data, tc);
    return p;
}

CollabResult collaborate(const ExperimentConfig& cfg, DecoderLM& qg, const SpanQaNet& qa, const Vocab& vocab,
                         const TupleSet& data, const fs::path& dir, std::uint64_t salt) {
    const auto items = feedback_items(vocab, data);
    SpanQaOracle oracle(qa, vocab, cfg.train.criterion, cfg.train.tau, cfg.train.max_answer_len);
    FeedbackSettings fs_cfg{cfg.train, cfg.sampler, {}};
    fs_cfg.train.seed = derive_seed(cfg.seed, key("collab"), salt);
    fs_cfg.sampler.rng_seed = derive_seed(cfg.seed, key("collab-sampler"), salt);
    fs::create_directories(dir);
    return run_collaborative(qg, vocab, oracle, items, fs_cfg, dir.string());
}

json partition_json(const FeedbackPartition& p, std::span<const FeedbackItem> items) {
    auto ids = [&](const std::set<std::size_t>& s) {
        json a = json::array();
        for (std::size_t i : s) a.push_back(items[i].id);
        return a;
    };
    json transitions = json::array();
    for (const auto& t : p.transitions()) {
        transitions.push_back({{"iteration", t.iteration},
                               {"tuple", items[t.tuple].id},
                               {"direction", t.direction == Direction::ToAnswerable ? "answerable" : "unanswerable"}});
    }
    json probes = json::array();
    for (const auto& pr : p.probes()) {
        probes.push_back({{"iteration", pr.iteration}, {"tuple", items[pr.tuple].id}, {"answered", pr.still_answerable}});
    }
    return {{"answerable", ids(p.answerable())},
            {"unanswerable", ids(p.unanswerable())},
            {"transitions", transitions},
            {"probes", probes}};
}

// A fresh encoder QA trained for the surrogate budget, scored on dev.
struct SurrogateArm {
    std::string name;
    QaEvaluation dev;
    std::uint64_t hash = 0;
    std::size_t train_tuples = 0;
};

SurrogateArm train_surrogate(const ExperimentConfig& cfg, const Vocab& vocab, const std::string& name,
                             const TupleSet& train, const TupleSet& dev, const fs::path& dir) {
    // Every arm starts from the same initialization so only the data differs.
    SpanQaNet qa(net_for(cfg, vocab, false), derive_seed(cfg.seed, key("surrogate-init")));
    TrainConfig tc = cfg.train;
    tc.pretrain_epochs = cfg.surrogate_epochs;
    tc.seed = derive_seed(cfg.seed, key("surrogate-train"));
    pretrain_qa(qa, vocab, train, tc);
    if (!dir.empty()) qa.save((dir / ("surrogate_" + name + ".ckpt")).string());
    return {name, evaluate_qa(qa, vocab, dev, cfg.train.max_answer_len), qa.parameters().value_hash(),
            train.tuple_count()};
}

json arm_json(const SurrogateArm& a, const std::string& generator = {}, const std::string& variant = {}) {
    json j = {{"name", a.name}, {"dev", qa_eval_json(a.dev)}, {"qa_hash", hex(a.hash)}, {"train_tuples", a.train_tuples}};
    if (!generator.empty()) j["generator"] = generator;
    if (!variant.empty()) j["variant"] = variant;
    return j;
}

void write_json(const fs::path& p, const json& j) { write_file(p.string(), j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

json protocol_pretrain(const ExperimentConfig& cfg, Stopwatch& sw) {
    Workspace ws = open_workspace(cfg);
    sw.mark("load");
    PretrainedPair p = pretrain_pair(cfg, ws.vocab, ws.pretrain_set(), false, 0);
    sw.mark("train");
    ws.vocab.save((ws.dir / "vocab.txt").string());
    p.qg.save((ws.dir / "qg.ckpt").string());
    p.qa.save((ws.dir / "qa.ckpt").string());
    const QaEvaluation dev = evaluate_qa(p.qa, ws.vocab, ws.corpus.dev, cfg.train.max_answer_len);
    SamplerConfig sampler = cfg.sampler;
    sampler.rng_seed = derive_seed(cfg.seed, key("dev-generation"));
    const Generated gen = generate_questions(p.qg, ws.vocab, ws.corpus.dev, sampler);
    const MetricReport gen_report = generation_report(gen, ws.corpus.dev);
    sw.mark("evaluate");
    write_json(ws.dir / "curves.json", {{"qg", curve_json(p.qg_curve)}, {"qa", curve_json(p.qa_curve)}});
    return {{"pretrain_on", cfg.pretrain_on},
            {"train_contexts", ws.pretrain_set().context_count()},
            {"train_tuples", ws.pretrain_set().tuple_count()},
            {"vocab_size", ws.vocab.size()},
            {"qg", curve_json(p.qg_curve)},
            {"qa", curve_json(p.qa_curve)},
            {"qg_loss_ratio", p.qg_curve.final / p.qg_curve.initial},
            {"qa_dev", qa_eval_json(dev)},
            {"qg_dev", json::parse(gen_report.to_json())},
            {"hashes", {{"qg", hex(p.qg.parameters().value_hash())}, {"qa", hex(p.qa.parameters().value_hash())}}}};
}

void require_inputs(const ExperimentConfig& cfg, bool need_qa) {
    if (cfg.qg_checkpoint.empty() || cfg.vocab_path.empty() || (need_qa && cfg.qa_checkpoint.empty())) {
        throw InvalidArgument(std::string("protocol needs qg_checkpoint") + (need_qa ? ", qa_checkpoint" : "") +
                              " and vocab_path from a pretrain run");
    }
    for (const auto& p : {cfg.qg_checkpoint, cfg.vocab_path, need_qa ? cfg.qa_checkpoint : cfg.vocab_path}) {
        if (!fs::exists(p)) throw IoError("input '" + p + "' does not exist");
    }
}

json protocol_collab(const ExperimentConfig& cfg, Stopwatch& sw) {
    require_inputs(cfg, true);
    CorpusData corpus = load_corpus(cfg.corpus);
    const Vocab vocab = Vocab::load(cfg.vocab_path);
    DecoderLM qg = DecoderLM::load(cfg.qg_checkpoint);
    const SpanQaNet qa = SpanQaNet::load(cfg.qa_checkpoint);
    if (qg.config().vocab_size != vocab.size() || qa.config().vocab_size != vocab.size()) {
        throw InvalidArgument("checkpoints and vocabulary disagree on vocabulary size");
    }
    const HalfSplit split = half_split(corpus.train, derive_seed(cfg.seed, key("split")));
    const TupleSet& data = cfg.pretrain_on == "train" ? corpus.train : split.sp2;
    sw.mark("load");
    const fs::path dir(cfg.out_dir);
    const std::uint64_t qg_before = qg.parameters().value_hash();
    CollabResult res = collaborate(cfg, qg, qa, vocab, data, dir, 0);
    sw.mark("collaborate");
    qg.save((dir / "qg.ckpt").string());
    const auto items = feedback_items(vocab, data);
    write_json(dir / "partition.json", partition_json(res.partition, items));
    json stats = json::array();
    for (const auto& s : res.stats) stats.push_back(json::parse(s.to_json()));
    return {{"tuples", items.size()},
            {"epochs", stats},
            {"qa_hash_before", hex(res.qa_hash_before)},
            {"qa_hash_after", hex(res.qa_hash_after)},
            {"qa_frozen", res.qa_hash_before == res.qa_hash_after},
            {"qg_hash_before", hex(qg_before)},
            {"qg_hash_after", hex(qg.parameters().value_hash())}};
}

json protocol_generate(const ExperimentConfig& cfg, Stopwatch& sw) {
    require_inputs(cfg, false);
    CorpusData corpus = load_corpus(cfg.corpus);
    const Vocab vocab = Vocab::load(cfg.vocab_path);
    const DecoderLM qg = DecoderLM::load(cfg.qg_checkpoint);
    const HalfSplit split = half_split(corpus.train, derive_seed(cfg.seed, key("split")));
    sw.mark("load");
    SamplerConfig sampler = cfg.sampler;
    sampler.rng_seed = derive_seed(cfg.seed, key("generate"));
    const Generated gen = generate_questions(qg, vocab, split.sp1, sampler);
    sw.mark("generate");
    const fs::path dir(cfg.out_dir);
    write_file((dir / "generations.jsonl").string(), generation_jsonl(gen.batch.results));
    json errors = json::array();
    for (const auto& e : gen.batch.errors) errors.push_back({{"record_id", e.record_id}, {"message", e.message}});
    std::size_t truncated = 0;
    for (const auto& r : gen.batch.results) truncated += r.truncated;
    return {{"generated", gen.batch.results.size()},
            {"truncated", truncated},
            {"errors", errors},
            {"metrics", json::parse(generation_report(gen, split.sp1).to_json())}};
}

json protocol_surrogate(const ExperimentConfig& cfg, Stopwatch& sw) {
    Workspace ws = open_workspace(cfg);
    sw.mark("load");
    std::vector<std::pair<std::string, DecoderLM>> generators;
    json feedback;
    if (!cfg.qg_checkpoint.empty()) {
        generators.emplace_back("given", DecoderLM::load(cfg.qg_checkpoint));
        if (!cfg.vocab_path.empty() && !(Vocab::load(cfg.vocab_path) == ws.vocab)) {
            throw InvalidArgument("vocab_path differs from the vocabulary of this corpus");
        }
    } else {
        PretrainedPair p = pretrain_pair(cfg, ws.vocab, ws.split.sp2, false, 0);
        sw.mark("pretrain");
        p.qg.save((ws.dir / "qg_lm_init.ckpt").string());
        p.qa.save((ws.dir / "qa_feedback.ckpt").string());
        DecoderLM collab = p.qg;
        const CollabResult res = collaborate(cfg, collab, p.qa, ws.vocab, ws.split.sp2, ws.dir / "collab", 0);
        sw.mark("collaborate");
        collab.save((ws.dir / "qg_collab.ckpt").string());
        feedback = {{"qa_hash", hex(res.qa_hash_after)}, {"qa_frozen", res.qa_hash_before == res.qa_hash_after}};
        json stats = json::array();
        for (const auto& s : res.stats) stats.push_back(json::parse(s.to_json()));
        feedback["epochs"] = stats;
        generators.emplace_back("lm_init", std::move(p.qg));
        generators.emplace_back("collaborative", std::move(collab));
    }

    json arms = json::array();
    json generation = json::object();
    std::set<std::uint64_t> surrogate_hashes;
    for (const auto& [name, qg] : generators) {
        SamplerConfig sampler = cfg.sampler;
        sampler.rng_seed = derive_seed(cfg.seed, key("surrogate-generation"));
        const Generated gen = generate_questions(qg, ws.vocab, ws.split.sp1, sampler);
        write_file((ws.dir / ("generations_" + name + ".jsonl")).string(), generation_jsonl(gen.batch.results));
        generation[name] = json::parse(generation_report(gen, ws.split.sp1).to_json());
        const SurrogateArm a = train_surrogate(cfg, ws.vocab, name + "_generated", gen.set, ws.corpus.dev, ws.dir);
        const SurrogateArm b =
            train_surrogate(cfg, ws.vocab, name + "_mixed", merge(ws.split.sp2, gen.set), ws.corpus.dev, ws.dir);
        arms.push_back(arm_json(a, name, "generated_sp1"));
        arms.push_back(arm_json(b, name, "gold_sp2_plus_generated_sp1"));
        surrogate_hashes.insert({a.hash, b.hash});
        sw.mark("surrogate_" + name);
    }
    const SurrogateArm gold = train_surrogate(cfg, ws.vocab, "gold", ws.corpus.train, ws.corpus.dev, ws.dir);
    arms.push_back(arm_json(gold, "gold", "gold_sp2_plus_gold_sp1"));
    sw.mark("surrogate_gold");
    if (feedback.contains("qa_hash") && surrogate_hashes.count(std::stoull(feedback["qa_hash"].get<std::string>(), nullptr, 16))) {
        throw InvariantError("surrogate QA coincides with the feedback QA");
    }
    return {{"arms", arms}, {"generation", generation}, {"feedback", feedback}};
}

json protocol_semisup(const ExperimentConfig& cfg, Stopwatch& sw) {
    CorpusData corpus = load_corpus(cfg.corpus);
    sw.mark("load");
    const Vocab vocab = build_vocab(corpus.train);
    json rows = json::array();
    for (double rate : cfg.rates) {
        char tag[32];
        std::snprintf(tag, sizeof tag, "rate_%.2f", rate);
        const fs::path dir = fs::path(cfg.out_dir) / tag;
        const LabelingSplit split =
            labeling_rate_split(corpus.train, rate, cfg.test_fraction, derive_seed(cfg.seed, key("labeling")));
        const std::uint64_t salt = key(tag);
        PretrainedPair p = pretrain_pair(cfg, vocab, split.labeled, false, salt);
        CollabResult res;
        if (cfg.train.feedback_epochs > 0) res = collaborate(cfg, p.qg, p.qa, vocab, split.labeled, dir / "collab", salt);

        TupleSet unlabeled;
        for (const auto& u : split.unlabeled) {
            ContextRecord r{u.id(), u.context(), {}};
            for (const auto& a : u.answers()) r.tuples.push_back({a.id, a.span, {"?"}, a.golds});
            unlabeled.records.push_back(std::move(r));
        }
        SamplerConfig sampler = cfg.sampler;
        sampler.rng_seed = derive_seed(cfg.seed, key("semisup-generation"), salt);
        const Generated gen = generate_questions(p.qg, vocab, unlabeled, sampler);
        save_records((dir / "generated_unlabeled.jsonl").string(), gen.set);

        SpanQaNet qa(net_for(cfg, vocab, false), derive_seed(cfg.seed, key("semisup-qa"), salt));
        TrainConfig tc = cfg.train;
        tc.pretrain_epochs = cfg.surrogate_epochs;
        tc.seed = derive_seed(cfg.seed, key("semisup-train"), salt);
        pretrain_qa(qa, vocab, merge(split.labeled, gen.set), tc);
        qa.save((dir / "qa.ckpt").string());
        const QaEvaluation dev = evaluate_qa(qa, vocab, corpus.dev, cfg.train.max_answer_len);
        const QaEvaluation test = evaluate_qa(qa, vocab, split.test, cfg.train.max_answer_len);
        rows.push_back({{"rate", rate},
                        {"labeled_contexts", split.labeled.context_count()},
                        {"unlabeled_contexts", split.unlabeled.size()},
                        {"test_contexts", split.test.context_count()},
                        {"dev_f1", dev.f1},
                        {"test_f1", test.f1},
                        {"test_em", test.em}});
        sw.mark(tag);
    }
    std::ostringstream table;
    char line[128];
    std::snprintf(line, sizeof line, "%-8s %9s %9s %9s\n", "rate", "dev F1", "test F1", "test EM");
    table << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-8.2f %9.4f %9.4f %9.4f\n", r["rate"].get<double>(), r["dev_f1"].get<double>(),
                      r["test_f1"].get<double>(), r["test_em"].get<double>());
        table << line;
    }
    write_file((fs::path(cfg.out_dir) / "table.txt").string(), table.str());
    return {{"rows", rows}};
}

json protocol_ablation(const ExperimentConfig& cfg, Stopwatch& sw) {
    Workspace ws = open_workspace(cfg);
    sw.mark("load");
    PretrainedPair base = pretrain_pair(cfg, ws.vocab, ws.split.sp2, false, 0);
    SpanQaNet decoder_qa(net_for(cfg, ws.vocab, true), derive_seed(cfg.seed, key("qa-decoder-init")));
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, key("pretrain"), 0);
    const LossCurve dec_curve = pretrain_qa(decoder_qa, ws.vocab, ws.split.sp2, tc);
    base.qg.save((ws.dir / "qg_lm_init.ckpt").string());
    base.qa.save((ws.dir / "qa_encoder.ckpt").string());
    decoder_qa.save((ws.dir / "qa_decoder.ckpt").string());
    sw.mark("pretrain");

    struct Arm {
        std::string name;
        const SpanQaNet* qa;
    };
    json arms = json::array();
    const std::uint64_t init_hash = base.qg.parameters().value_hash();
    for (const Arm& arm : {Arm{"encoder_qa", &base.qa}, Arm{"decoder_span_qa", &decoder_qa}}) {
        DecoderLM qg = base.qg;
        if (qg.parameters().value_hash() != init_hash) throw InvariantError("ablation arms start from different QG");
        const CollabResult res = collaborate(cfg, qg, *arm.qa, ws.vocab, ws.split.sp2, ws.dir / arm.name, 0);
        qg.save((ws.dir / arm.name / "qg.ckpt").string());
        SamplerConfig sampler = cfg.sampler;
        sampler.rng_seed = derive_seed(cfg.seed, key("surrogate-generation"));
        const Generated gen = generate_questions(qg, ws.vocab, ws.split.sp1, sampler);
        const SurrogateArm s = train_surrogate(cfg, ws.vocab, arm.name, gen.set, ws.corpus.dev, ws.dir);
        const QaEvaluation feedback_dev = evaluate_qa(*arm.qa, ws.vocab, ws.corpus.dev, cfg.train.max_answer_len);
        arms.push_back({{"name", arm.name},
                        {"qg_init_hash", hex(init_hash)},
                        {"feedback_qa_dev", qa_eval_json(feedback_dev)},
                        {"final_unanswerable", res.stats.empty() ? 0 : res.stats.back().unanswerable},
                        {"surrogate", arm_json(s)}});
        sw.mark(arm.name);
    }
    const double enc = arms[0]["surrogate"]["dev"]["f1"].get<double>();
    const double dec = arms[1]["surrogate"]["dev"]["f1"].get<double>();
    json ordered = enc >= dec ? json::array({arms[0]["name"], arms[1]["name"]}) : json::array({arms[1]["name"], arms[0]["name"]});
    return {{"arms", arms},
            {"order_by_f1", ordered},
            {"expected_direction_holds", enc >= dec},
            {"deviation", enc >= dec ? "" : "decoder span-head arm outscored the encoder arm"},
            {"decoder_qa_curve", curve_json(dec_curve)}};
}

json protocol_metrics(const ExperimentConfig& cfg, Stopwatch& sw) {
    if (cfg.metrics_input.empty()) throw InvalidArgument("metrics protocol needs metrics_input (or --corpus)");
    const std::string text = read_file(cfg.metrics_input);
    std::vector<GenerationPair> gen;
    std::vector<AnswerPair> ans;
    std::istringstream is(text);
    std::string line;
    std::size_t n = 0;
    auto words = [](const std::string& s) { return tokenize(s); };
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (j.contains("generated")) gen.push_back({words(j.at("generated")), words(j.at("gold"))});
            else if (j.contains("predicted")) {
                AnswerPair a{j.at("predicted").get<std::string>(), {}};
                if (j.contains("golds")) a.golds = j.at("golds").get<std::vector<std::string>>();
                else a.golds.push_back(j.at("gold").get<std::string>());
                ans.push_back(std::move(a));
            } else {
                throw FormatError("line " + std::to_string(n) + " has neither 'generated' nor 'predicted'");
            }
        } catch (const json::exception& e) {
            throw FormatError(cfg.metrics_input + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    const MetricReport r = make_report(gen, ans);
    sw.mark("score");
    write_file((fs::path(cfg.out_dir) / "metrics.txt").string(), r.to_table());
    return json::parse(r.to_json());
}

json protocol_synth_data(const ExperimentConfig& cfg, Stopwatch& sw) {
    CorpusData corpus = load_corpus(cfg.corpus);
    const HalfSplit split = half_split(corpus.train, derive_seed(cfg.seed, key("split")));
    const fs::path dir(cfg.out_dir);
    save_records((dir / "train.jsonl").string(), corpus.train);
    save_records((dir / "dev.jsonl").string(), corpus.dev);
    save_records((dir / "sp2.jsonl").string(), split.sp2);
    save_records((dir / "sp1.jsonl").string(), split.sp1);
    sw.mark("write");
    const json manifest = {{"kind", "half_split"},
                           {"corpus_seed", cfg.corpus.seed},
                           {"split_seed", derive_seed(cfg.seed, key("split"))},
                           {"counts",
                            {{"train", {{"contexts", corpus.train.context_count()}, {"tuples", corpus.train.tuple_count()}}},
                             {"dev", {{"contexts", corpus.dev.context_count()}, {"tuples", corpus.dev.tuple_count()}}},
                             {"sp2", {{"contexts", split.sp2.context_count()}, {"tuples", split.sp2.tuple_count()}}},
                             {"sp1", {{"contexts", split.sp1.context_count()}, {"tuples", split.sp1.tuple_count()}}}}},
                           {"sp2_ids", split.sp2.context_ids()},
                           {"sp1_ids", split.sp1.context_ids()}};
    write_json(dir / "split_manifest.json", manifest);
    return {{"counts", manifest["counts"]}, {"quarantined", corpus.quarantined}};
}

}  // namespace

Protocol parse_protocol(const std::string& name) {
    for (const auto& [p, n] : protocol_names())
        if (n == name) return p;
    throw InvalidArgument("unknown protocol '" + name + "'");
}

std::string protocol_name(Protocol p) {
    for (const auto& [q, n] : protocol_names())
        if (q == p) return n;
    throw InvalidArgument("unknown protocol id");
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    ExperimentConfig c;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        check_keys(j, {"protocol", "seed", "out_dir", "corpus", "net", "train", "sampler", "pretrain_on",
                       "surrogate_epochs", "rates", "test_fraction", "qg_checkpoint", "qa_checkpoint", "vocab_path",
                       "metrics_input"},
                   "config");
        if (j.contains("protocol")) c.protocol = parse_protocol(j["protocol"].get<std::string>());
        c.seed = j.value("seed", c.seed);
        c.out_dir = j.value("out_dir", c.out_dir);
        if (j.contains("corpus")) {
            const json& k = j["corpus"];
            check_keys(k, {"source", "path", "dev_path", "n_contexts", "n_dev", "seed"}, "corpus");
            c.corpus.source = k.value("source", c.corpus.source);
            c.corpus.path = k.value("path", c.corpus.path);
            c.corpus.dev_path = k.value("dev_path", c.corpus.dev_path);
            c.corpus.n_contexts = k.value("n_contexts", c.corpus.n_contexts);
            c.corpus.n_dev = k.value("n_dev", c.corpus.n_dev);
            c.corpus.seed = k.value("seed", c.corpus.seed);
        }
        if (j.contains("net")) {
            const json& k = j["net"];
            check_keys(k, {"d_model", "n_heads", "n_layers", "d_ff", "max_seq_len", "dropout_rate"}, "net");
            c.net.d_model = k.value("d_model", c.net.d_model);
            c.net.n_heads = k.value("n_heads", c.net.n_heads);
            c.net.n_layers = k.value("n_layers", c.net.n_layers);
            c.net.d_ff = k.value("d_ff", c.net.d_ff);
            c.net.max_seq_len = k.value("max_seq_len", c.net.max_seq_len);
            c.net.dropout_rate = k.value("dropout_rate", c.net.dropout_rate);
        }
        if (j.contains("train")) {
            check_keys(j["train"], {"pretrain_epochs", "feedback_epochs", "batch_size", "replay_fraction", "criterion",
                                    "tau", "qg_lr", "qa_lr", "feedback_lr", "max_answer_len", "seed"},
                       "train");
            c.train = TrainConfig::from_json(j["train"].dump());
        }
        if (j.contains("sampler")) {
            const json& k = j["sampler"];
            check_keys(k, {"k", "max_question_len", "rng_seed"}, "sampler");
            c.sampler.k = k.value("k", c.sampler.k);
            c.sampler.max_question_len = k.value("max_question_len", c.sampler.max_question_len);
        }
        c.pretrain_on = j.value("pretrain_on", c.pretrain_on);
        c.surrogate_epochs = j.value("surrogate_epochs", c.surrogate_epochs);
        if (j.contains("rates")) c.rates = j["rates"].get<std::vector<double>>();
        c.test_fraction = j.value("test_fraction", c.test_fraction);
        c.qg_checkpoint = j.value("qg_checkpoint", c.qg_checkpoint);
        c.qa_checkpoint = j.value("qa_checkpoint", c.qa_checkpoint);
        c.vocab_path = j.value("vocab_path", c.vocab_path);
        c.metrics_input = j.value("metrics_input", c.metrics_input);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config has a field of the wrong type: ") + e.what());
    }
    c.train.seed = c.seed;
    c.sampler.rng_seed = c.seed;
    return c;
}

std::string ExperimentConfig::to_json() const {
    json mirrored_train = json::parse(train.to_json());
    mirrored_train["seed"] = seed;
    json j = {{"protocol", protocol_name(protocol)},
              {"seed", seed},
              {"out_dir", out_dir},
              {"corpus",
               {{"source", corpus.source},
                {"path", corpus.path},
                {"dev_path", corpus.dev_path},
                {"n_contexts", corpus.n_contexts},
                {"n_dev", corpus.n_dev},
                {"seed", corpus.seed}}},
              {"net",
               {{"d_model", net.d_model},
                {"n_heads", net.n_heads},
                {"n_layers", net.n_layers},
                {"d_ff", net.d_ff},
                {"max_seq_len", net.max_seq_len},
                {"dropout_rate", net.dropout_rate}}},
              {"train", mirrored_train},
              {"sampler", {{"k", sampler.k}, {"max_question_len", sampler.max_question_len}, {"rng_seed", seed}}},
              {"pretrain_on", pretrain_on},
              {"surrogate_epochs", surrogate_epochs},
              {"rates", rates},
              {"test_fraction", test_fraction},
              {"qg_checkpoint", qg_checkpoint},
              {"qa_checkpoint", qa_checkpoint},
              {"vocab_path", vocab_path},
              {"metrics_input", metrics_input}};
    return j.dump(2);
}

void ExperimentConfig::validate() const {
    if (out_dir.empty()) throw InvalidArgument("out_dir must be set");
    if (pretrain_on != "sp2" && pretrain_on != "train") throw InvalidArgument("pretrain_on must be 'sp2' or 'train'");
    if (corpus.source != "synthetic" && corpus.source != "records" && corpus.source != "squad") {
        throw InvalidArgument("corpus.source must be synthetic, records or squad");
    }
    if (corpus.source != "synthetic" && protocol != Protocol::Metrics) {
        if (corpus.path.empty()) throw InvalidArgument("corpus.path is required for a " + corpus.source + " corpus");
        if (!fs::exists(corpus.path)) throw IoError("corpus file '" + corpus.path + "' does not exist");
        if (corpus.dev_path.empty()) throw InvalidArgument("corpus.dev_path is required for a " + corpus.source + " corpus");
        if (!fs::exists(corpus.dev_path)) throw IoError("dev file '" + corpus.dev_path + "' does not exist");
    }
    if (surrogate_epochs == 0) throw InvalidArgument("surrogate_epochs must be positive");
    for (double r : rates)
        if (!(r > 0.0 && r < 1.0)) throw InvalidArgument("labeling rates must lie in (0, 1)");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test_fraction must lie in (0, 1)");
    NetConfig n = net;
    n.vocab_size = kSpecialCount + 1;
    n.validate();
    train.validate();
    if (sampler.k == 0 || sampler.max_question_len == 0) throw InvalidArgument("sampler k and max_question_len must be positive");
}

CorpusData load_corpus(const CorpusConfig& cfg) {
    CorpusData out;
    if (cfg.source == "synthetic") {
        SyntheticCorpus s = generate_synthetic(SyntheticTemplates::biographies(), cfg.n_contexts, cfg.n_dev, cfg.seed);
        out.train = std::move(s.train);
        out.dev = std::move(s.dev);
    } else if (cfg.source == "records") {
        out.train = load_records(cfg.path);
        out.dev = load_records(cfg.dev_path);
    } else if (cfg.source == "squad") {
        SquadLoad train = load_squad(cfg.path);
        SquadLoad dev = load_squad(cfg.dev_path);
        out.train = std::move(train.set);
        out.dev = std::move(dev.set);
        out.quarantined = train.quarantine.size() + dev.quarantine.size();
    } else {
        throw InvalidArgument("unknown corpus source '" + cfg.source + "'");
    }
    if (out.train.records.empty() || out.dev.records.empty()) throw InvalidArgument("corpus has an empty train or dev set");
    return out;
}

Vocab build_vocab(const TupleSet& train) {
    std::vector<Words> sentences;
    for (const auto& r : train.records) {
        sentences.push_back(r.context);
        for (const auto& t : r.tuples) sentences.push_back(t.question);
    }
    return Vocab::build_from_words(sentences);
}

std::string run_protocol(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    write_file((dir / "resolved_config.json").string(), cfg.to_json() + "\n");
    Stopwatch sw;
    json body;
    switch (cfg.protocol) {
        case Protocol::Pretrain: body = protocol_pretrain(cfg, sw); break;
        case Protocol::Collab: body = protocol_collab(cfg, sw); break;
        case Protocol::Generate: body = protocol_generate(cfg, sw); break;
        case Protocol::Surrogate: body = protocol_surrogate(cfg, sw); break;
        case Protocol::Semisup: body = protocol_semisup(cfg, sw); break;
        case Protocol::Ablation: body = protocol_ablation(cfg, sw); break;
        case Protocol::Metrics: body = protocol_metrics(cfg, sw); break;
        case Protocol::SynthData: body = protocol_synth_data(cfg, sw); break;
    }
    json report = {{"protocol", protocol_name(cfg.protocol)}, {"seed", cfg.seed}, {"results", body}};
    const std::string text = report.dump(2) + "\n";
    write_file((dir / "report.json").string(), text);
    write_json(dir / "timings.json", sw.log());
    return text;
}

}  // namespace coqg
