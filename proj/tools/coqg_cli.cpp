// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every subcommand runs one experiment protocol
// through the C interface and prints its report.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coqg/coqg.h"

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::string corpus;
    std::uint64_t seed = 0;
    bool print_config = false;
};

int fail(coqg_status s) {
    std::fprintf(stderr, "coqg: %s: %s\n", coqg_status_name(s), coqg_last_error_message());
    return 1;
}

int run(const std::string& protocol, const CommonFlags& f, bool seed_given) {
    std::string config_text;
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in) {
            std::fprintf(stderr, "coqg: cannot read config '%s'\n", f.config.c_str());
            return 1;
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        config_text = ss.str();
    }
    coqg_run_options opts{};
    opts.config_json = config_text.empty() ? nullptr : config_text.c_str();
    opts.out_dir = f.out.empty() ? nullptr : f.out.c_str();
    opts.corpus_path = f.corpus.empty() ? nullptr : f.corpus.c_str();
    opts.seed = f.seed;
    opts.has_seed = seed_given ? 1 : 0;

    char* text = nullptr;
    if (f.print_config) {
        if (coqg_status s = coqg_resolve_config(protocol.c_str(), &opts, &text); s != COQG_OK) return fail(s);
    } else {
        if (coqg_status s = coqg_run_protocol(protocol.c_str(), &opts, &text); s != COQG_OK) return fail(s);
    }
    std::fputs(text, stdout);
    coqg_string_free(text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coqg: collaborative question generation and answering"};
    app.set_version_flag("--version", std::string(coqg_version_string()));
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"pretrain", "Pre-train the question generator and the QA model"},
        {"collab", "Run the collaborative feedback loop from pre-trained checkpoints"},
        {"generate", "Generate questions for the evaluation half of a corpus"},
        {"surrogate", "Score generators by QA models trained on their questions"},
        {"semisup", "Sweep labeling rates in the semi-supervised setting"},
        {"ablation", "Compare encoder and decoder span-head QA as feedback models"},
        {"metrics", "Score generation or answer pairs (--corpus is the pairs file)"},
        {"synth-data", "Write the synthetic corpus and its split as record files"},
    };
    std::vector<CommonFlags> flags(commands.size());
    std::vector<CLI::Option*> seed_opts(commands.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < commands.size(); ++i) {
        CLI::App* sub = app.add_subcommand(commands[i].first, commands[i].second);
        sub->add_option("--config", flags[i].config, "JSON config file")->check(CLI::ExistingFile);
        seed_opts[i] = sub->add_option("--seed", flags[i].seed, "Base seed for every random stream");
        sub->add_option("--out", flags[i].out, "Run directory");
        sub->add_option("--corpus", flags[i].corpus, "Corpus file (records .jsonl or SQuAD .json)");
        sub->add_flag("--print-config", flags[i].print_config, "Print the resolved config and exit");
        subs.push_back(sub);
    }
    CLI11_PARSE(app, argc, argv);

    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (subs[i]->parsed()) return run(commands[i].first, flags[i], seed_opts[i]->count() > 0);
    }
    return 1;
}
