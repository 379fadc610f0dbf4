// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "nets.hpp"

#include <cmath>
#include <limits>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace coqg {

using ad::Tape;
using ad::Var;
using json = nlohmann::json;

namespace {

constexpr double kInitStd = 0.02;
constexpr double kMaskedScore = -1e30;
constexpr double kLayerNormEps = 1e-5;

std::string layer_name(std::size_t layer, const char* suffix) {
    return "layer" + std::to_string(layer) + "." + suffix;
}

DenseArray normal_init(Shape shape, Rng& rng) {
    DenseArray a(std::move(shape));
    for (double& v : a.values()) v = kInitStd * rng.normal();
    return a;
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for a [fan_in x fan_out] weight.
DenseArray fan_in_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    DenseArray a({fan_in, fan_out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : a.values()) v = bound * (2.0 * rng.uniform() - 1.0);
    return a;
}

void check_length(const NetConfig& cfg, std::size_t n) {
    if (n == 0) throw DimensionError("empty token sequence");
    if (n > cfg.max_seq_len) {
        throw DimensionError("sequence of " + std::to_string(n) + " tokens exceeds max_seq_len " +
                             std::to_string(cfg.max_seq_len));
    }
}

void check_ids(const NetConfig& cfg, std::span<const TokenId> ids) {
    for (TokenId id : ids) {
        if (id >= cfg.vocab_size) {
            throw DimensionError("token id " + std::to_string(id) + " outside vocabulary of " +
                                 std::to_string(cfg.vocab_size));
        }
    }
}

// Same arithmetic, in the same order, as ad::layer_norm on one row.
void layer_norm_row(const double* x, const double* gain, const double* bias, double* out, std::size_t n) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += x[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < n; ++c) out[c] = gain[c] * ((x[c] - mean) * inv_std) + bias[c];
}

std::string model_metadata(const char* kind, const NetConfig& cfg) {
    json meta;
    meta["kind"] = kind;
    meta["net"] = json::parse(cfg.to_json());
    return meta.dump();
}

NetConfig parse_model_metadata(const std::string& metadata, const char* expected_kind) {
    json meta;
    try {
        meta = json::parse(metadata);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint metadata is not JSON: ") + e.what());
    }
    if (meta.value("kind", std::string()) != expected_kind) {
        throw FormatError(std::string("checkpoint does not hold a ") + expected_kind + " model");
    }
    return NetConfig::from_json(meta.at("net").dump());
}

}  // namespace

void NetConfig::validate() const {
    if (vocab_size <= kSpecialCount) throw InvalidArgument("vocab_size must exceed the reserved token count");
    if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || max_seq_len == 0) {
        throw InvalidArgument("network extents must be positive");
    }
    if (d_model % n_heads != 0) {
        throw InvalidArgument("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                              std::to_string(n_heads));
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw InvalidArgument("dropout_rate must lie in [0, 1)");
}

std::string NetConfig::to_json() const {
    json j = {{"vocab_size", vocab_size}, {"d_model", d_model},         {"n_heads", n_heads},
              {"n_layers", n_layers},     {"d_ff", d_ff},               {"max_seq_len", max_seq_len},
              {"dropout_rate", dropout_rate}, {"causal", causal}};
    return j.dump();
}

NetConfig NetConfig::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        NetConfig c;
        c.vocab_size = j.at("vocab_size").get<std::size_t>();
        c.d_model = j.at("d_model").get<std::size_t>();
        c.n_heads = j.at("n_heads").get<std::size_t>();
        c.n_layers = j.at("n_layers").get<std::size_t>();
        c.d_ff = j.at("d_ff").get<std::size_t>();
        c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
        c.dropout_rate = j.at("dropout_rate").get<double>();
        c.causal = j.at("causal").get<bool>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed network config: ") + e.what());
    }
}

void TransformerStack::init_parameters(const NetConfig& cfg, ParameterStore& store, Rng& rng) {
    const std::size_t d = cfg.d_model;
    store.add("embed.token", normal_init({cfg.vocab_size, d}, rng));
    store.add("embed.position", normal_init({cfg.max_seq_len, d}, rng));
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        store.add(layer_name(l, "ln1.gain"), DenseArray({d}, 1.0));
        store.add(layer_name(l, "ln1.bias"), DenseArray({d}, 0.0));
        store.add(layer_name(l, "attn.qkv.weight"), fan_in_init(d, 3 * d, rng));
        store.add(layer_name(l, "attn.qkv.bias"), DenseArray({3 * d}, 0.0));
        store.add(layer_name(l, "attn.out.weight"), fan_in_init(d, d, rng));
        store.add(layer_name(l, "attn.out.bias"), DenseArray({d}, 0.0));
        store.add(layer_name(l, "ln2.gain"), DenseArray({d}, 1.0));
        store.add(layer_name(l, "ln2.bias"), DenseArray({d}, 0.0));
        store.add(layer_name(l, "ff.in.weight"), fan_in_init(d, cfg.d_ff, rng));
        store.add(layer_name(l, "ff.in.bias"), DenseArray({cfg.d_ff}, 0.0));
        store.add(layer_name(l, "ff.out.weight"), fan_in_init(cfg.d_ff, d, rng));
        store.add(layer_name(l, "ff.out.bias"), DenseArray({d}, 0.0));
    }
    store.add("final_ln.gain", DenseArray({d}, 1.0));
    store.add("final_ln.bias", DenseArray({d}, 0.0));
}

Var TransformerStack::hidden(const NetConfig& cfg, ParameterStore& store, Tape& tape, std::span<const TokenId> ids,
                             const ForwardOptions& opts) {
    check_length(cfg, ids.size());
    check_ids(cfg, ids);
    const bool drop = opts.training && cfg.dropout_rate > 0.0;
    if (drop && !opts.rng) throw InvalidArgument("training forward pass needs an rng for dropout");
    auto param = [&](const std::string& name) { return tape.parameter(store.at(name)); };
    auto maybe_dropout = [&](Var v) { return drop ? ad::dropout(v, cfg.dropout_rate, *opts.rng) : v; };

    const std::size_t d = cfg.d_model, dh = d / cfg.n_heads, n = ids.size();
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Var x = ad::add(ad::embedding(param("embed.token"), ids), ad::slice_rows(param("embed.position"), 0, n));
    x = maybe_dropout(x);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        Var h = ad::layer_norm(x, param(layer_name(l, "ln1.gain")), param(layer_name(l, "ln1.bias")));
        Var qkv = ad::add_row(ad::matmul(h, param(layer_name(l, "attn.qkv.weight"))),
                              param(layer_name(l, "attn.qkv.bias")));
        std::vector<Var> heads;
        heads.reserve(cfg.n_heads);
        for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
            Var q = ad::slice_cols(qkv, hd * dh, dh);
            Var k = ad::slice_cols(qkv, d + hd * dh, dh);
            Var v = ad::slice_cols(qkv, 2 * d + hd * dh, dh);
            Var scores = ad::scale(ad::matmul_nt(q, k), score_scale);
            if (cfg.causal) scores = ad::causal_fill(scores, kMaskedScore);
            heads.push_back(ad::matmul(ad::softmax(scores, 1), v));
        }
        Var attn = ad::add_row(ad::matmul(ad::concat_cols(heads), param(layer_name(l, "attn.out.weight"))),
                               param(layer_name(l, "attn.out.bias")));
        x = ad::add(x, maybe_dropout(attn));

        Var h2 = ad::layer_norm(x, param(layer_name(l, "ln2.gain")), param(layer_name(l, "ln2.bias")));
        Var ff = ad::gelu(ad::add_row(ad::matmul(h2, param(layer_name(l, "ff.in.weight"))),
                                      param(layer_name(l, "ff.in.bias"))));
        ff = ad::add_row(ad::matmul(ff, param(layer_name(l, "ff.out.weight"))), param(layer_name(l, "ff.out.bias")));
        x = ad::add(x, maybe_dropout(ff));
    }
    return ad::layer_norm(x, param("final_ln.gain"), param("final_ln.bias"));
}

// ---------------------------------------------------------------------------
// Decoder LM

DecoderLM::DecoderLM(NetConfig cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
    cfg_.causal = true;
    cfg_.validate();
    Rng rng(seed);
    TransformerStack::init_parameters(cfg_, store_, rng);
}

Var DecoderLM::logits(Tape& tape, std::span<const TokenId> ids, const ForwardOptions& opts) const {
    Var h = TransformerStack::hidden(cfg_, store_, tape, ids, opts);
    return ad::matmul_nt(h, tape.parameter(store_.at("embed.token")));
}

void DecoderLM::save(const std::string& path) const {
    save_checkpoint(path, store_, model_metadata("decoder_lm", cfg_));
}

DecoderLM DecoderLM::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    DecoderLM m;
    m.cfg_ = parse_model_metadata(ck.metadata, "decoder_lm");
    m.store_ = std::move(ck.store);
    return m;
}

DenseArray decoder_forward(const DecoderLM& model, std::span<const TokenId> ids) {
    Tape tape(false);
    DenseArray probs = model.logits(tape, ids).value();
    ad::softmax_rows_inplace(probs);
    return probs;
}

Var qg_loss(Tape& tape, const DecoderLM& model, const QgInput& input, const ForwardOptions& opts) {
    const std::size_t n = input.ids.size();
    if (input.loss_mask.size() != n) throw DimensionError("qg_loss: loss mask length differs from sequence");
    if (n < 2) throw InvalidArgument("qg_loss: sequence too short to carry a question");
    check_length(model.config(), n);
    // Position t predicts token t+1; the last token is never an input.
    std::span<const TokenId> inputs(input.ids.data(), n - 1);
    std::span<const TokenId> targets(input.ids.data() + 1, n - 1);
    std::span<const std::uint8_t> mask(input.loss_mask.data() + 1, n - 1);
    return ad::cross_entropy(model.logits(tape, inputs, opts), targets, mask);
}

// ---------------------------------------------------------------------------
// Incremental decoding

IncrementalDecoder::IncrementalDecoder(const DecoderLM& model)
    : model_(model), keys_(model.config().n_layers), values_(model.config().n_layers) {}

std::vector<double> IncrementalDecoder::feed(std::span<const TokenId> ids) {
    if (ids.empty()) throw DimensionError("feed: no tokens");
    check_ids(model_.config(), ids);
    std::vector<double> logits;
    for (std::size_t i = 0; i < ids.size(); ++i) step(ids[i], logits, i + 1 == ids.size());
    return logits;
}

void IncrementalDecoder::step(TokenId id, std::vector<double>& logits_out, bool want_logits) {
    const NetConfig& cfg = model_.config();
    if (length_ >= cfg.max_seq_len) {
        throw DimensionError("incremental decoding past max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    const ParameterStore& s = model_.store_;
    auto p = [&](const std::string& name) { return s.at(name).value.data(); };
    const std::size_t d = cfg.d_model, dh = d / cfg.n_heads, t = length_;
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<double> x(d), h(d), qkv(3 * d), attn(d), proj(d), ff(cfg.d_ff), ff_out(d);
    const double* tok = p("embed.token");
    const double* pos = p("embed.position");
    for (std::size_t c = 0; c < d; ++c) x[c] = tok[id * d + c] + pos[t * d + c];

    std::vector<double> scores;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        layer_norm_row(x.data(), p(layer_name(l, "ln1.gain")), p(layer_name(l, "ln1.bias")), h.data(), d);
        std::fill(qkv.begin(), qkv.end(), 0.0);
        kernels::gemm_nn(h.data(), p(layer_name(l, "attn.qkv.weight")), qkv.data(), 1, d, 3 * d);
        const double* bqkv = p(layer_name(l, "attn.qkv.bias"));
        for (std::size_t c = 0; c < 3 * d; ++c) qkv[c] += bqkv[c];
        auto& keys = keys_[l];
        auto& vals = values_[l];
        keys.insert(keys.end(), qkv.begin() + static_cast<std::ptrdiff_t>(d), qkv.begin() + static_cast<std::ptrdiff_t>(2 * d));
        vals.insert(vals.end(), qkv.begin() + static_cast<std::ptrdiff_t>(2 * d), qkv.end());

        std::fill(attn.begin(), attn.end(), 0.0);
        scores.assign(t + 1, 0.0);
        for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
            const double* q = qkv.data() + hd * dh;
            for (std::size_t j = 0; j <= t; ++j) {
                const double* k = keys.data() + j * d + hd * dh;
                double acc = 0.0;
                for (std::size_t c = 0; c < dh; ++c)
                    if (q[c] != 0.0) acc += q[c] * k[c];
                scores[j] = acc * score_scale;
            }
            double mx = -std::numeric_limits<double>::infinity();
            for (double v : scores) mx = std::max(mx, v);
            double z = 0.0;
            for (double& v : scores) {
                v = std::exp(v - mx);
                z += v;
            }
            for (double& v : scores) v /= z;
            double* o = attn.data() + hd * dh;
            for (std::size_t j = 0; j <= t; ++j) {
                if (scores[j] == 0.0) continue;
                const double* v = vals.data() + j * d + hd * dh;
                for (std::size_t c = 0; c < dh; ++c) o[c] += scores[j] * v[c];
            }
        }
        std::fill(proj.begin(), proj.end(), 0.0);
        kernels::gemm_nn(attn.data(), p(layer_name(l, "attn.out.weight")), proj.data(), 1, d, d);
        const double* bo = p(layer_name(l, "attn.out.bias"));
        for (std::size_t c = 0; c < d; ++c) proj[c] += bo[c];
        for (std::size_t c = 0; c < d; ++c) x[c] += proj[c];

        layer_norm_row(x.data(), p(layer_name(l, "ln2.gain")), p(layer_name(l, "ln2.bias")), h.data(), d);
        std::fill(ff.begin(), ff.end(), 0.0);
        kernels::gemm_nn(h.data(), p(layer_name(l, "ff.in.weight")), ff.data(), 1, d, cfg.d_ff);
        const double* b1 = p(layer_name(l, "ff.in.bias"));
        for (std::size_t c = 0; c < cfg.d_ff; ++c) ff[c] = ad::gelu_value(ff[c] + b1[c]);
        std::fill(ff_out.begin(), ff_out.end(), 0.0);
        kernels::gemm_nn(ff.data(), p(layer_name(l, "ff.out.weight")), ff_out.data(), 1, cfg.d_ff, d);
        const double* b2 = p(layer_name(l, "ff.out.bias"));
        for (std::size_t c = 0; c < d; ++c) ff_out[c] += b2[c];
        for (std::size_t c = 0; c < d; ++c) x[c] += ff_out[c];
    }
    ++length_;
    if (!want_logits) return;
    layer_norm_row(x.data(), p("final_ln.gain"), p("final_ln.bias"), h.data(), d);
    logits_out.assign(cfg.vocab_size, 0.0);
    for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c)
            if (h[c] != 0.0) acc += h[c] * tok[v * d + c];
        logits_out[v] = acc;
    }
    for (double v : logits_out)
        if (!std::isfinite(v)) throw NumericError("non-finite logit in incremental decoding");
}

// ---------------------------------------------------------------------------
// Span QA

SpanQaNet::SpanQaNet(NetConfig cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
    cfg_.validate();
    Rng rng(seed);
    TransformerStack::init_parameters(cfg_, store_, rng);
    store_.add("span_head.weight", fan_in_init(cfg_.d_model, 2, rng));
    store_.add("span_head.bias", DenseArray({2}, 0.0));
}

Var SpanQaNet::span_logits(Tape& tape, std::span<const TokenId> ids, const ForwardOptions& opts) const {
    Var h = TransformerStack::hidden(cfg_, store_, tape, ids, opts);
    return ad::add_row(ad::matmul(h, tape.parameter(store_.at("span_head.weight"))),
                       tape.parameter(store_.at("span_head.bias")));
}

void SpanQaNet::save(const std::string& path) const { save_checkpoint(path, store_, model_metadata("span_qa", cfg_)); }

SpanQaNet SpanQaNet::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    SpanQaNet m;
    m.cfg_ = parse_model_metadata(ck.metadata, "span_qa");
    m.store_ = std::move(ck.store);
    return m;
}

DenseArray encoder_forward(const SpanQaNet& model, std::span<const TokenId> ids) {
    Tape tape(false);
    return model.span_logits(tape, ids).value();
}

Var qa_span_loss(Tape& tape, const SpanQaNet& model, const QaInput& input, TokenSpan gold, const ForwardOptions& opts) {
    const std::size_t len = input.context_length;
    if (len == 0) throw InvalidArgument("qa_span_loss: empty context range");
    if (gold.start > gold.end || gold.end >= len) {
        throw InvalidArgument("qa_span_loss: gold span [" + std::to_string(gold.start) + ", " +
                              std::to_string(gold.end) + "] outside context of " + std::to_string(len) + " tokens");
    }
    Var logits = model.span_logits(tape, input.ids, opts);
    Var ctx = ad::slice_rows(logits, input.context_begin, len);
    const std::uint8_t on = 1;
    auto track_loss = [&](std::size_t column, std::size_t target) {
        Var row = ad::reshape(ad::slice_cols(ctx, column, 1), {1, len});
        const auto t = static_cast<TokenId>(target);
        return ad::cross_entropy(row, std::span<const TokenId>(&t, 1), std::span<const std::uint8_t>(&on, 1));
    };
    return ad::scale(ad::add(track_loss(0, gold.start), track_loss(1, gold.end)), 0.5);
}

SpanPrediction best_span(const DenseArray& logits, std::size_t context_begin, std::size_t context_length,
                         std::size_t max_answer_len) {
    if (context_length == 0) throw InvalidArgument("best_span: empty context range");
    if (max_answer_len == 0) throw InvalidArgument("best_span: max_answer_len must be positive");
    if (logits.rank() != 2 || logits.shape()[1] != 2 || context_begin + context_length > logits.shape()[0]) {
        throw DimensionError("best_span: logits " + to_string(logits.shape()) + " do not cover the context range");
    }
    std::vector<double> start(context_length), end(context_length);
    for (std::size_t i = 0; i < context_length; ++i) {
        start[i] = logits.at(context_begin + i, 0);
        end[i] = logits.at(context_begin + i, 1);
    }
    ad::log_softmax_inplace(start);
    ad::log_softmax_inplace(end);
    SpanPrediction best{0, 0, -std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < context_length; ++i) {
        const std::size_t last = std::min(context_length, i + max_answer_len);
        for (std::size_t j = i; j < last; ++j) {
            const double s = start[i] + end[j];
            if (s > best.score) best = {i, j, s};
        }
    }
    return best;
}

SpanPrediction qa_predict_span(const SpanQaNet& model, const QaInput& input, std::size_t max_answer_len) {
    return best_span(encoder_forward(model, input.ids), input.context_begin, input.context_length, max_answer_len);
}

}  // namespace coqg
