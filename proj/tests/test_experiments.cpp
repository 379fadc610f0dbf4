// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include "checkpoint.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "json.hpp"
#include "metrics.hpp"
#include "run_dirs.hpp"

using namespace coqg;
using namespace coqg::testing;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("coqg_unit_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("protocol names round trip") {
    for (Protocol p : {Protocol::Pretrain, Protocol::Collab, Protocol::Generate, Protocol::Surrogate, Protocol::Semisup,
                       Protocol::Ablation, Protocol::Metrics, Protocol::SynthData}) {
        CHECK(parse_protocol(protocol_name(p)) == p);
    }
    CHECK_THROWS_AS(parse_protocol("train"), InvalidArgument);
}

TEST_CASE("experiment config round trips and rejects unknown keys") {
    ExperimentConfig c = tiny_experiment(Protocol::Semisup, "x");
    c.train.criterion = Criterion::F1;
    c.sampler.k = 3;
    const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(ExperimentConfig::from_json("{}").to_json() == ExperimentConfig{}.to_json());
    CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"learning_rate": 1})"), FormatError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"train": {"epochs": 1}})"), FormatError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"protocol": "nope"})"), Error);
    CHECK_THROWS_AS(ExperimentConfig::from_json("[1,"), FormatError);
}

TEST_CASE("config validation") {
    ExperimentConfig c = tiny_experiment(Protocol::Pretrain, "x");
    CHECK_NOTHROW(c.validate());
    c.corpus.source = "records";
    c.corpus.path = "/definitely/missing.jsonl";
    c.corpus.dev_path = "/definitely/missing_dev.jsonl";
    CHECK_THROWS_AS(c.validate(), IoError);
    c = tiny_experiment(Protocol::Pretrain, "x");
    c.rates = {0.0};
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = tiny_experiment(Protocol::Pretrain, "x");
    c.net.n_heads = 5;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("vocabulary comes from training data only") {
    const SyntheticCorpus s = generate_synthetic(SyntheticTemplates::biographies(), 20, 5, 1);
    TupleSet t = s.train;
    t.records[0].context.push_back("zzyzx");
    const Vocab v = build_vocab(t);
    CHECK(v.contains("zzyzx"));
    TupleSet d = s.dev;
    d.records[0].context.push_back("qqq");
    CHECK_FALSE(build_vocab(s.train).contains("qqq"));
}

TEST_CASE("pretrain run directory is self-describing and reproducible") {
    const fs::path a = scratch("pre_a"), b = scratch("pre_b");
    const std::string report = run_protocol(tiny_experiment(Protocol::Pretrain, a.string()));
    run_protocol(tiny_experiment(Protocol::Pretrain, b.string()));
    for (const char* f : {"resolved_config.json", "report.json", "timings.json", "vocab.txt", "qg.ckpt", "qa.ckpt", "curves.json"})
        CHECK(fs::exists(a / f));
    const json r = json::parse(report);
    CHECK(r.at("protocol") == "pretrain");
    CHECK(r.at("seed") == 3);
    CHECK(json::parse(slurp(a / "report.json")) == r);
    CHECK(differing_files(a, b).empty());

    // The resolved config reproduces the run on its own.
    ExperimentConfig again = ExperimentConfig::from_json(slurp(a / "resolved_config.json"));
    const fs::path c = scratch("pre_c");
    again.out_dir = c.string();
    run_protocol(again);
    CHECK(slurp(a / "qg.ckpt") == slurp(c / "qg.ckpt"));

    const fs::path d = scratch("pre_d");
    run_protocol(tiny_experiment(Protocol::Pretrain, d.string(), 4));
    CHECK(slurp(a / "qg.ckpt") != slurp(d / "qg.ckpt"));
    for (const auto& p : {a, b, c, d}) fs::remove_all(p);
}

TEST_CASE("collab and generate consume pretrain outputs") {
    const fs::path pre = scratch("cg_pre"), col = scratch("cg_col"), gen = scratch("cg_gen");
    run_protocol(tiny_experiment(Protocol::Pretrain, pre.string()));

    ExperimentConfig c = tiny_experiment(Protocol::Collab, col.string());
    c.qg_checkpoint = (pre / "qg.ckpt").string();
    c.qa_checkpoint = (pre / "qa.ckpt").string();
    c.vocab_path = (pre / "vocab.txt").string();
    const json r = json::parse(run_protocol(c));
    CHECK(fs::exists(col / "partition.json"));
    CHECK(r.at("results").at("epochs").size() == c.train.feedback_epochs);
    CHECK(r.at("results").at("qa_frozen").get<bool>());

    ExperimentConfig g = tiny_experiment(Protocol::Generate, gen.string());
    g.qg_checkpoint = c.qg_checkpoint;
    g.vocab_path = c.vocab_path;
    run_protocol(g);
    const auto lines = parse_generation_jsonl(slurp(gen / "generations.jsonl"));
    CHECK_FALSE(lines.empty());

    ExperimentConfig missing = tiny_experiment(Protocol::Collab, col.string());
    CHECK_THROWS_AS(run_protocol(missing), InvalidArgument);
    for (const auto& p : {pre, col, gen}) fs::remove_all(p);
}

TEST_CASE("metrics protocol scores a pairs file") {
    const fs::path dir = scratch("metrics");
    fs::create_directories(dir);
    write_file((dir / "pairs.jsonl").string(),
               "{\"generated\": \"who plays the flute ?\", \"gold\": \"who plays the flute ?\"}\n"
               "{\"predicted\": \"england patriots\", \"gold\": \"new england patriots\"}\n");
    ExperimentConfig c = tiny_experiment(Protocol::Metrics, (dir / "run").string());
    c.metrics_input = (dir / "pairs.jsonl").string();
    const json r = json::parse(run_protocol(c)).at("results");
    const MetricReport m = MetricReport::from_json(r.dump());
    CHECK((*m.bleu)[3] == 1.0);
    CHECK(*m.f1 == doctest::Approx(0.8));
    CHECK(fs::exists(dir / "run" / "metrics.txt"));

    write_file((dir / "bad.jsonl").string(), "{\"neither\": 1}\n");
    c.metrics_input = (dir / "bad.jsonl").string();
    CHECK_THROWS_AS(run_protocol(c), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("synth-data writes the splits") {
    const fs::path dir = scratch("synth");
    run_protocol(tiny_experiment(Protocol::SynthData, dir.string()));
    const TupleSet sp1 = load_records((dir / "sp1.jsonl").string());
    const TupleSet sp2 = load_records((dir / "sp2.jsonl").string());
    CHECK(sp1.context_count() + sp2.context_count() == 40);
    CHECK(load_records((dir / "train.jsonl").string()).context_count() == 40);

    // A records corpus written by synth-data loads back through the records source.
    CorpusConfig cc;
    cc.source = "records";
    cc.path = (dir / "train.jsonl").string();
    cc.dev_path = (dir / "dev.jsonl").string();
    const CorpusData loaded = load_corpus(cc);
    CHECK(loaded.train.context_count() == 40);
    CHECK(loaded.dev.context_count() == 10);
    fs::remove_all(dir);
}
