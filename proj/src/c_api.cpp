// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "coqg/coqg.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "json.hpp"
#include "metrics.hpp"
#include "nets.hpp"
#include "sampler.hpp"
#include "tokenizer.hpp"

struct coqg_vocab {
    coqg::Vocab vocab;
};
struct coqg_decoder {
    coqg::DecoderLM model;
};
struct coqg_qa {
    coqg::SpanQaNet model;
};

namespace {

thread_local std::string g_last_error;

coqg_status status_of(coqg::ErrorKind k) {
    switch (k) {
        case coqg::ErrorKind::InvalidArgument: return COQG_INVALID_ARGUMENT;
        case coqg::ErrorKind::Dimension: return COQG_DIMENSION;
        case coqg::ErrorKind::Numeric: return COQG_NUMERIC;
        case coqg::ErrorKind::Io: return COQG_IO;
        case coqg::ErrorKind::Format: return COQG_FORMAT;
        case coqg::ErrorKind::Invariant: return COQG_INVARIANT;
    }
    return COQG_INTERNAL;
}

template <typename F>
coqg_status guarded(F&& body) {
    g_last_error.clear();
    try {
        body();
        return COQG_OK;
    } catch (const coqg::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return COQG_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return COQG_INTERNAL;
    } catch (...) {
        g_last_error = "unknown exception";
        return COQG_INTERNAL;
    }
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void need(const void* p, const char* what) {
    if (!p) throw coqg::InvalidArgument(std::string(what) + " must not be NULL");
}

coqg::ExperimentConfig resolve(const char* protocol, const coqg_run_options* o) {
    need(protocol, "protocol");
    const coqg::Protocol kind = coqg::parse_protocol(protocol);
    coqg::ExperimentConfig cfg;
    if (o && o->config_json) cfg = coqg::ExperimentConfig::from_json(o->config_json);
    cfg.protocol = kind;
    if (o && o->has_seed) {
        cfg.seed = o->seed;
        cfg.train.seed = o->seed;
        cfg.sampler.rng_seed = o->seed;
    }
    if (o && o->out_dir) cfg.out_dir = o->out_dir;
    if (o && o->corpus_path) {
        const std::string path = o->corpus_path;
        if (cfg.protocol == coqg::Protocol::Metrics) {
            cfg.metrics_input = path;
        } else {
            cfg.corpus.path = path;
            if (cfg.corpus.source == "synthetic") {
                cfg.corpus.source = path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0 ? "records" : "squad";
            }
        }
    }
    cfg.validate();
    return cfg;
}

std::string join_words(const std::vector<std::string>& w, std::size_t from, std::size_t to) {
    std::string out;
    for (std::size_t i = from; i <= to; ++i) out += (i > from ? " " : "") + w[i];
    return out;
}

}  // namespace

extern "C" {

const char* coqg_version_string(void) { return "0.1.0"; }

const char* coqg_last_error_message(void) { return g_last_error.c_str(); }

const char* coqg_status_name(coqg_status s) {
    switch (s) {
        case COQG_OK: return "ok";
        case COQG_INVALID_ARGUMENT: return "invalid argument";
        case COQG_DIMENSION: return "dimension error";
        case COQG_NUMERIC: return "numeric error";
        case COQG_IO: return "i/o error";
        case COQG_FORMAT: return "format error";
        case COQG_INVARIANT: return "invariant violation";
        case COQG_INTERNAL: return "internal error";
    }
    return "unknown status";
}

void coqg_string_free(char* s) { std::free(s); }

coqg_status coqg_resolve_config(const char* protocol, const coqg_run_options* options, char** resolved_json) {
    return guarded([&] {
        need(resolved_json, "resolved_json");
        *resolved_json = dup(resolve(protocol, options).to_json());
    });
}

coqg_status coqg_run_protocol(const char* protocol, const coqg_run_options* options, char** report_json) {
    return guarded([&] {
        const coqg::ExperimentConfig cfg = resolve(protocol, options);
        const std::string report = coqg::run_protocol(cfg);
        if (report_json) *report_json = dup(report);
    });
}

coqg_status coqg_metrics_evaluate(const char* pairs_jsonl, char** report_json) {
    using nlohmann::json;
    return guarded([&] {
        need(pairs_jsonl, "pairs_jsonl");
        need(report_json, "report_json");
        std::vector<coqg::GenerationPair> gen;
        std::vector<coqg::AnswerPair> ans;
        std::string text(pairs_jsonl);
        std::size_t pos = 0, line_no = 0;
        while (pos <= text.size()) {
            const std::size_t nl = text.find('\n', pos);
            const std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
            pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const json j = json::parse(line);
                if (j.contains("generated")) {
                    gen.push_back({coqg::tokenize(j.at("generated").get<std::string>()),
                                   coqg::tokenize(j.at("gold").get<std::string>())});
                } else {
                    coqg::AnswerPair a{j.at("predicted").get<std::string>(), {}};
                    if (j.contains("golds")) a.golds = j.at("golds").get<std::vector<std::string>>();
                    else a.golds.push_back(j.at("gold").get<std::string>());
                    ans.push_back(std::move(a));
                }
            } catch (const json::exception& e) {
                throw coqg::FormatError("pairs line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        *report_json = dup(coqg::make_report(gen, ans).to_json());
    });
}

coqg_status coqg_vocab_load(const char* path, coqg_vocab** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new coqg_vocab{coqg::Vocab::load(path)};
    });
}

void coqg_vocab_free(coqg_vocab* vocab) { delete vocab; }

size_t coqg_vocab_size(const coqg_vocab* vocab) { return vocab ? vocab->vocab.size() : 0; }

coqg_status coqg_vocab_encode(const coqg_vocab* vocab, const char* text, uint32_t* ids, size_t capacity, size_t* count) {
    return guarded([&] {
        need(vocab, "vocab");
        need(text, "text");
        need(count, "count");
        if (capacity > 0) need(ids, "ids");
        const coqg::TokenSequence seq = vocab->vocab.encode(text);
        for (std::size_t i = 0; i < seq.size() && i < capacity; ++i) ids[i] = seq[i];
        *count = seq.size();
    });
}

coqg_status coqg_decoder_load(const char* path, coqg_decoder** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new coqg_decoder{coqg::DecoderLM::load(path)};
    });
}

void coqg_decoder_free(coqg_decoder* decoder) { delete decoder; }

coqg_status coqg_generate_question(const coqg_decoder* decoder, const coqg_vocab* vocab, const char* context,
                                   size_t answer_start, size_t answer_end, size_t k, uint64_t seed, char** question) {
    return guarded([&] {
        need(decoder, "decoder");
        need(vocab, "vocab");
        need(context, "context");
        need(question, "question");
        if (decoder->model.config().vocab_size != vocab->vocab.size()) {
            throw coqg::InvalidArgument("decoder and vocabulary sizes differ");
        }
        const coqg::TokenSequence ctx = vocab->vocab.encode(context);
        coqg::SamplerConfig cfg;
        cfg.k = k;
        cfg.rng_seed = seed;
        const auto q = coqg::sample_question(decoder->model, vocab->vocab, ctx, {answer_start, answer_end}, cfg);
        *question = dup(vocab->vocab.decode(q.tokens));
    });
}

coqg_status coqg_qa_load(const char* path, coqg_qa** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new coqg_qa{coqg::SpanQaNet::load(path)};
    });
}

void coqg_qa_free(coqg_qa* qa) { delete qa; }

coqg_status coqg_answer_question(const coqg_qa* qa, const coqg_vocab* vocab, const char* context, const char* question,
                                 size_t* start, size_t* end, char** answer) {
    return guarded([&] {
        need(qa, "qa");
        need(vocab, "vocab");
        need(context, "context");
        need(question, "question");
        if (qa->model.config().vocab_size != vocab->vocab.size()) {
            throw coqg::InvalidArgument("QA model and vocabulary sizes differ");
        }
        const auto words = coqg::tokenize(context);
        const coqg::QaInput in = coqg::format_qa_input(vocab->vocab, vocab->vocab.encode_words(words),
                                                       vocab->vocab.encode(question), qa->model.config().max_seq_len);
        const coqg::SpanPrediction p = coqg::qa_predict_span(qa->model, in, 12);
        if (start) *start = p.start;
        if (end) *end = p.end;
        if (answer) *answer = dup(join_words(words, p.start, p.end));
    });
}

coqg_status coqg_checkpoint_hash(const char* path, uint64_t* hash) {
    return guarded([&] {
        need(path, "path");
        need(hash, "hash");
        *hash = coqg::load_checkpoint(path).store.value_hash();
    });
}

}  // extern "C"
