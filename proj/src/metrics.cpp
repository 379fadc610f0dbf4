// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "metrics.hpp"

#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "errors.hpp"
#include "json.hpp"

namespace coqg {

using json = nlohmann::json;

namespace {

std::map<Words, std::size_t> ngram_counts(std::span<const std::string> toks, std::size_t n) {
    std::map<Words, std::size_t> counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) ++counts[Words(toks.begin() + i, toks.begin() + i + n)];
    return counts;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

Words split_words(const std::string& s) {
    Words out;
    std::istringstream is(s);
    for (std::string w; is >> w;) out.push_back(w);
    return out;
}

}  // namespace

std::vector<double> bleu(std::span<const Words> candidates, std::span<const Words> references, std::size_t max_n) {
    if (candidates.empty()) throw InvalidArgument("bleu: empty corpus");
    if (candidates.size() != references.size()) throw DimensionError("bleu: candidate and reference counts differ");
    if (max_n == 0 || max_n > 4) throw InvalidArgument("bleu: max_n must lie in 1..4");

    std::vector<double> matched(max_n, 0.0), total(max_n, 0.0);
    double cand_len = 0.0, ref_len = 0.0;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        cand_len += static_cast<double>(candidates[s].size());
        ref_len += static_cast<double>(references[s].size());
        for (std::size_t n = 1; n <= max_n; ++n) {
            const auto ref = ngram_counts(references[s], n);
            for (const auto& [gram, count] : ngram_counts(candidates[s], n)) {
                auto it = ref.find(gram);
                matched[n - 1] += static_cast<double>(std::min(count, it == ref.end() ? 0 : it->second));
                total[n - 1] += static_cast<double>(count);
            }
        }
    }
    std::vector<double> out(max_n, 0.0);
    if (cand_len == 0.0) return out;
    const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        if (matched[n - 1] == 0.0) break;  // this and every higher order stay 0
        log_sum += std::log(matched[n - 1] / total[n - 1]);
        out[n - 1] = bp * std::exp(log_sum / static_cast<double>(n));
    }
    return out;
}

double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference, double beta) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(reference.size());
    const double b2 = beta * beta;
    return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l_corpus(std::span<const Words> candidates, std::span<const Words> references, double beta) {
    if (candidates.empty()) throw InvalidArgument("rouge_l: empty corpus");
    if (candidates.size() != references.size()) throw DimensionError("rouge_l: candidate and reference counts differ");
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) total += rouge_l(candidates[i], references[i], beta);
    return total / static_cast<double>(candidates.size());
}

std::string squad_normalize(std::string_view text) {
    std::string s;
    s.reserve(text.size());
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 128 && std::ispunct(c)) continue;
        s.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
    }
    std::string out;
    for (const auto& w : split_words(s)) {
        if (w == "a" || w == "an" || w == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

double exact_match(std::string_view pred, std::string_view gold) {
    return squad_normalize(pred) == squad_normalize(gold) ? 1.0 : 0.0;
}

double token_f1(std::string_view pred, std::string_view gold) {
    const Words p = split_words(squad_normalize(pred));
    const Words g = split_words(squad_normalize(gold));
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, std::size_t> gold_counts;
    for (const auto& w : g) ++gold_counts[w];
    std::size_t same = 0;
    for (const auto& w : p) {
        auto it = gold_counts.find(w);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++same;
        }
    }
    if (same == 0) return 0.0;
    const double precision = static_cast<double>(same) / static_cast<double>(p.size());
    const double recall = static_cast<double>(same) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

double exact_match(std::string_view pred, std::span<const std::string> golds) {
    if (golds.empty()) throw InvalidArgument("exact_match: no gold answers");
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, exact_match(pred, g));
    return best;
}

double token_f1(std::string_view pred, std::span<const std::string> golds) {
    if (golds.empty()) throw InvalidArgument("token_f1: no gold answers");
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, token_f1(pred, g));
    return best;
}

MetricReport make_report(std::span<const GenerationPair> generation, std::span<const AnswerPair> answers) {
    if (generation.empty() && answers.empty()) throw InvalidArgument("metric report needs at least one pair");
    MetricReport r;
    if (!generation.empty()) {
        std::vector<Words> cand, ref;
        for (const auto& p : generation) {
            cand.push_back(p.generated);
            ref.push_back(p.gold);
        }
        const auto b = bleu(cand, ref, 4);
        r.bleu = std::array<double, 4>{b[0], b[1], b[2], b[3]};
        r.rouge_l = rouge_l_corpus(cand, ref);
        r.generation_pairs = generation.size();
    }
    if (!answers.empty()) {
        double em = 0.0, f1 = 0.0;
        for (const auto& a : answers) {
            em += exact_match(a.predicted, a.golds);
            f1 += token_f1(a.predicted, a.golds);
        }
        r.em = em / static_cast<double>(answers.size());
        r.f1 = f1 / static_cast<double>(answers.size());
        r.answer_pairs = answers.size();
    }
    return r;
}

std::string MetricReport::to_json() const {
    json j;
    j["schema"] = "coqg.metric_report";
    j["version"] = kSchemaVersion;
    j["counts"] = {{"generation_pairs", generation_pairs}, {"answer_pairs", answer_pairs}};
    if (bleu) j["bleu"] = {{"1", (*bleu)[0]}, {"2", (*bleu)[1]}, {"3", (*bleu)[2]}, {"4", (*bleu)[3]}};
    if (rouge_l) j["rouge_l"] = *rouge_l;
    if (em) j["em"] = *em;
    if (f1) j["f1"] = *f1;
    return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("schema").get<std::string>() != "coqg.metric_report") throw FormatError("not a metric report");
        if (j.at("version").get<int>() != kSchemaVersion) throw FormatError("unsupported metric report version");
        MetricReport r;
        r.generation_pairs = j.at("counts").at("generation_pairs").get<std::size_t>();
        r.answer_pairs = j.at("counts").at("answer_pairs").get<std::size_t>();
        if (j.contains("bleu")) {
            const auto& b = j.at("bleu");
            r.bleu = std::array<double, 4>{b.at("1").get<double>(), b.at("2").get<double>(), b.at("3").get<double>(),
                                           b.at("4").get<double>()};
        }
        if (j.contains("rouge_l")) r.rouge_l = j.at("rouge_l").get<double>();
        if (j.contains("em")) r.em = j.at("em").get<double>();
        if (j.contains("f1")) r.f1 = j.at("f1").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed metric report: ") + e.what());
    }
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    auto cell = [&](const std::optional<double>& v) {
        os << std::setw(9);
        if (v) os << 100.0 * *v;
        else os << "-";
    };
    os << std::setw(9) << "BLEU-1" << std::setw(9) << "BLEU-2" << std::setw(9) << "BLEU-3" << std::setw(9) << "BLEU-4"
       << std::setw(9) << "ROUGE-L" << std::setw(9) << "EM" << std::setw(9) << "F1" << '\n';
    for (std::size_t n = 0; n < 4; ++n) cell(bleu ? std::optional<double>((*bleu)[n]) : std::nullopt);
    cell(rouge_l);
    cell(em);
    cell(f1);
    os << '\n';
    return os.str();
}

}  // namespace coqg
