// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Runnable experiment protocols. Each run writes into its own directory:
//   resolved_config.json   the exact configuration, seeds included
//   report.json            protocol results; no wall-clock values
//   timings.json           wall-clock seconds per stage
// plus protocol-specific checkpoints, curves and record files.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"
#include "nets.hpp"
#include "sampler.hpp"
#include "trainer.hpp"

namespace coqg {

enum class Protocol { Pretrain, Collab, Generate, Surrogate, Semisup, Ablation, Metrics, SynthData };

Protocol parse_protocol(const std::string& name);
std::string protocol_name(Protocol p);

struct CorpusConfig {
    std::string source = "synthetic";  // synthetic | records | squad
    std::string path;                  // training file for records / squad
    std::string dev_path;
    std::size_t n_contexts = 500;
    std::size_t n_dev = 100;
    std::uint64_t seed = 7;            // synthetic generation only
};

struct ExperimentConfig {
    Protocol protocol = Protocol::Pretrain;
    std::uint64_t seed = 1;
    std::string out_dir = "runs/out";
    CorpusConfig corpus;
    NetConfig net;                     // vocab_size and causal are filled in per model
    TrainConfig train;                 // train.seed mirrors seed
    SamplerConfig sampler;             // sampler.rng_seed mirrors seed
    std::string pretrain_on = "sp2";   // sp2 | train
    std::size_t surrogate_epochs = 2;
    std::vector<double> rates = {0.1, 0.2, 0.5, 0.9};
    double test_fraction = 0.1;
    std::string qg_checkpoint, qa_checkpoint, vocab_path;  // collab / generate inputs
    std::string metrics_input;         // metrics protocol input (line-delimited pairs)

    // Missing keys keep their defaults; unknown keys are rejected.
    static ExperimentConfig from_json(const std::string& text);
    std::string to_json() const;
    void validate() const;
};

struct CorpusData {
    TupleSet train;
    TupleSet dev;
    std::size_t quarantined = 0;
};
CorpusData load_corpus(const CorpusConfig& cfg);

// Vocabulary over the training contexts and questions only.
Vocab build_vocab(const TupleSet& train);

// Runs the protocol, writes the run directory and returns report.json.
std::string run_protocol(const ExperimentConfig& cfg);

}  // namespace coqg
