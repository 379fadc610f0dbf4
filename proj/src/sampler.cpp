// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "errors.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace coqg {

using json = nlohmann::json;

void SamplerConfig::validate(std::size_t vocab_size) const {
    if (k == 0) throw InvalidArgument("sampler k must be at least 1");
    if (k > vocab_size) {
        throw InvalidArgument("sampler k " + std::to_string(k) + " exceeds vocabulary size " +
                              std::to_string(vocab_size));
    }
    if (max_question_len == 0) throw InvalidArgument("max_question_len must be positive");
}

namespace {

TokenId pick(const std::vector<double>& logits, std::size_t k, Rng& rng) {
    std::vector<TokenId> cand;
    cand.reserve(logits.size());
    for (TokenId id = 0; id < logits.size(); ++id)
        if (!is_control_token(id)) cand.push_back(id);
    k = std::min(k, cand.size());
    auto by_logit = [&](TokenId a, TokenId b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), by_logit);
    if (k == 1) return cand[0];

    const double top = logits[cand[0]];
    std::vector<double> w(k);
    for (std::size_t i = 0; i < k; ++i) w[i] = std::exp(logits[cand[i]] - top);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < k; ++i) {
        if (u < w[i]) return cand[i];
        u -= w[i];
    }
    return cand[k - 1];
}

}  // namespace

GeneratedQuestion sample_question(const DecoderLM& model, const Vocab& vocab, std::span<const TokenId> context,
                                  TokenSpan answer, const SamplerConfig& cfg, Rng& rng) {
    const NetConfig& net = model.config();
    cfg.validate(net.vocab_size);
    const QgInput prefix = format_qg_input(vocab, context, answer, std::nullopt);
    if (prefix.ids.size() >= net.max_seq_len) {
        throw DimensionError("generation prefix of " + std::to_string(prefix.ids.size()) +
                             " tokens leaves no room under max_seq_len " + std::to_string(net.max_seq_len));
    }
    IncrementalDecoder dec(model);
    std::vector<double> logits = dec.feed(prefix.ids);
    GeneratedQuestion out;
    const TokenId stop = id_of(Special::Question);
    while (true) {
        const TokenId next = pick(logits, cfg.k, rng);
        out.tokens.push_back(next);
        if (next == stop) break;
        if (out.tokens.size() == cfg.max_question_len || dec.length() == net.max_seq_len) {
            out.truncated = true;
            break;
        }
        logits = dec.feed(std::span<const TokenId>(&next, 1));
    }
    return out;
}

GeneratedQuestion sample_question(const DecoderLM& model, const Vocab& vocab, std::span<const TokenId> context,
                                  TokenSpan answer, const SamplerConfig& cfg) {
    Rng rng(cfg.rng_seed);
    return sample_question(model, vocab, context, answer, cfg, rng);
}

GenerationBatch batch_generate(const DecoderLM& model, const Vocab& vocab, std::span<const GenerationRequest> records,
                               const SamplerConfig& cfg) {
    cfg.validate(model.config().vocab_size);
    GenerationBatch batch;
    for (const auto& r : records) {
        try {
            if (r.answer.start > r.answer.end || r.answer.end >= r.context.size()) {
                throw InvalidArgument("answer span outside context");
            }
            Rng rng(derive_seed(cfg.rng_seed, hash_string(r.record_id)));
            const TokenSequence ctx = vocab.encode_words(r.context);
            GeneratedQuestion q = sample_question(model, vocab, ctx, r.answer, cfg, rng);
            GenerationResult g{r.record_id, r.context_id, {}, vocab.words(q.tokens), q.truncated};
            for (std::size_t i = r.answer.start; i <= r.answer.end; ++i) {
                if (i > r.answer.start) g.answer_text += ' ';
                g.answer_text += r.context[i];
            }
            batch.results.push_back(std::move(g));
        } catch (const Error& e) {
            batch.errors.push_back({r.record_id, e.what()});
        }
    }
    return batch;
}

std::string generation_jsonl(std::span<const GenerationResult> results) {
    std::string out;
    for (const auto& g : results) {
        std::string q;
        for (std::size_t i = 0; i < g.question.size(); ++i) q += (i ? " " : "") + g.question[i];
        json j = {{"record_id", g.record_id},
                  {"context_id", g.context_id},
                  {"answer", g.answer_text},
                  {"question", q},
                  {"truncated", g.truncated}};
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<GenerationResult> parse_generation_jsonl(const std::string& text) {
    std::vector<GenerationResult> out;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            GenerationResult g;
            g.record_id = j.at("record_id").get<std::string>();
            g.context_id = j.at("context_id").get<std::string>();
            g.answer_text = j.at("answer").get<std::string>();
            g.truncated = j.at("truncated").get<bool>();
            std::istringstream ws(j.at("question").get<std::string>());
            for (std::string w; ws >> w;) g.question.push_back(w);
            out.push_back(std::move(g));
        } catch (const json::exception& e) {
            throw FormatError("generation dump line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace coqg
