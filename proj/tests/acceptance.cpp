// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. One line per criterion:
//   [PASS] <n> <name>: <measured values>
// Exit status is non-zero when any criterion fails.
//
// Usage: coqg_acceptance [work_dir] [--only 1,2,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "metric_cases.hpp"
#include "metrics.hpp"
#include "run_dirs.hpp"

using namespace coqg;
using namespace coqg::testing;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

fs::path g_work;

// Runs a protocol with default settings unless the run directory already
// holds a report from the same resolved config.
json run_default(Protocol p, std::uint64_t seed, const std::string& name,
                 const std::function<void(ExperimentConfig&)>& tweak = {}) {
    ExperimentConfig c;
    c.protocol = p;
    c.seed = seed;
    c.out_dir = (g_work / name).string();
    if (tweak) tweak(c);
    fs::remove_all(c.out_dir);
    const auto t0 = Clock::now();
    json r = json::parse(run_protocol(c));
    std::printf("    ran %s seed %llu in %.0f s\n", protocol_name(p).c_str(), static_cast<unsigned long long>(seed),
                seconds_since(t0));
    std::fflush(stdout);
    return r;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
    const auto t0 = Clock::now();
    double worst_prim = 0.0, worst_net = 0.0;
    std::string worst_name;
    const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"};
    const std::vector<std::vector<std::string>> sentences = {words};
    const Vocab vocab = Vocab::build_from_words(sentences);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (const auto& c : primitive_cases(seed)) {
            Rng rng(seed);
            const double e = check_inputs(c.inputs(rng), c.f);
            if (e > worst_prim) {
                worst_prim = e;
                worst_name = c.name;
            }
        }
        Rng rng(seed + 50);
        auto draw = [&](std::size_t n) {
            TokenSequence ids(n);
            for (auto& t : ids) t = static_cast<TokenId>(kSpecialCount + rng.below(vocab.size() - kSpecialCount));
            return ids;
        };
        const TokenSequence ctx = draw(8), q = draw(5);
        DecoderLM qg(tiny_net_config(vocab.size(), true), seed);
        const QgInput qin = format_qg_input(vocab, ctx, {2, 4}, std::span<const TokenId>(q));
        worst_net = std::max(worst_net, check_parameters(qg.parameters(), [&](ad::Tape& t) { return qg_loss(t, qg, qin); }));
        SpanQaNet qa(tiny_net_config(vocab.size(), false), seed);
        const QaInput ain = format_qa_input(vocab, ctx, q, 24);
        worst_net = std::max(worst_net, check_parameters(qa.parameters(), [&](ad::Tape& t) {
                                 return qa_span_loss(t, qa, ain, {1, 3});
                             }));
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = worst_prim < 1e-4 && worst_net < 1e-4 && secs < 120.0;
    o.detail = "max rel err primitives " + fmt("%.2e", worst_prim) + " (" + worst_name + "), networks " +
               fmt("%.2e", worst_net) + ", " + fmt("%.1f", secs) + " s";
    return o;
}

Outcome metric_oracles() {
    double worst = 0.0;
    for (const auto& c : generation_cases()) {
        std::vector<Words> cands, refs;
        for (const auto& [a, b] : c.pairs) {
            cands.push_back(split_words(a));
            refs.push_back(split_words(b));
        }
        const auto got = bleu(cands, refs, 4);
        const auto want = oracle_bleu(c.pairs, 4);
        for (std::size_t n = 0; n < 4; ++n) worst = std::max(worst, std::abs(got[n] - want[n]));
        for (std::size_t i = 0; i < c.pairs.size(); ++i)
            worst = std::max(worst, std::abs(rouge_l(cands[i], refs[i]) - oracle_rouge(c.pairs[i].first, c.pairs[i].second)));
    }
    std::size_t answer_ok = 0;
    double worst_f1 = 0.0;
    for (const auto& c : answer_cases()) {
        const double f = token_f1(c.pred, c.gold);
        worst_f1 = std::max(worst_f1, std::abs(f - c.f1));
        answer_ok += exact_match(c.pred, c.gold) == c.em && std::abs(f - c.f1) <= 1e-15;
    }
    Outcome o;
    o.pass = generation_cases().size() == 20 && worst < 1e-9 && answer_cases().size() == 10 && answer_ok == 10;
    o.detail = "BLEU/ROUGE-L max |diff| " + fmt("%.1e", worst) + " over 20 cases, EM/F1 " + std::to_string(answer_ok) +
               "/10 (max F1 diff " + fmt("%.1e", worst_f1) + ")";
    return o;
}

// Criteria 3 and 4 share a collaborative run on the synthetic corpus.
std::pair<Outcome, Outcome> collaborative_contracts() {
    ExperimentConfig cfg;
    cfg.seed = 1;
    cfg.train.seed = 1;
    const CorpusData corpus = load_corpus(cfg.corpus);
    const Vocab vocab = build_vocab(corpus.train);
    const HalfSplit split = half_split(corpus.train, 1);
    NetConfig qg_net = cfg.net, qa_net = cfg.net;
    qg_net.vocab_size = qa_net.vocab_size = vocab.size();
    qg_net.causal = true;
    qa_net.causal = false;
    DecoderLM qg(qg_net, 11);
    SpanQaNet qa(qa_net, 12);
    pretrain_qg(qg, vocab, split.sp2, cfg.train);
    pretrain_qa(qa, vocab, split.sp2, cfg.train);
    const auto items = feedback_items(vocab, split.sp2);

    std::size_t mutations = 0, violations = 0;
    FeedbackSettings fs_cfg{cfg.train, cfg.sampler, {}};
    fs_cfg.sampler.rng_seed = 1;
    fs_cfg.on_mutation = [&](const FeedbackPartition& p) {
        ++mutations;
        std::size_t both = 0;
        for (std::size_t t : p.answerable()) both += p.unanswerable().count(t);
        if (both != 0 || p.answerable().size() + p.unanswerable().size() != p.size()) ++violations;
    };
    const std::uint64_t qa_before = qa.parameters().value_hash();
    const SpanQaOracle oracle(qa, vocab, cfg.train.criterion, cfg.train.tau, cfg.train.max_answer_len);
    Outcome c3, c4;
    bool hash_ok = false, replay_ok = false;
    std::size_t final_a = 0;
    std::vector<std::size_t> unanswerable;
    try {
        const CollabResult res = run_collaborative(qg, vocab, oracle, items, fs_cfg);
        const FeedbackPartition folded = FeedbackPartition::replay(items.size(), res.partition.transitions());
        replay_ok = folded.answerable() == res.partition.answerable() &&
                    folded.unanswerable() == res.partition.unanswerable();
        hash_ok = res.qa_hash_before == qa_before && res.qa_hash_after == qa_before &&
                  qa.parameters().value_hash() == qa_before;
        final_a = res.partition.answerable().size();
        for (const EpochStats& st : res.stats) unanswerable.push_back(st.unanswerable);
    } catch (const Error& e) {
        c3.detail = std::string("run aborted: ") + e.what();
    }
    c3.pass = violations == 0 && mutations > 0 && replay_ok;
    if (c3.detail.empty()) {
        c3.detail = std::to_string(mutations) + " mutations checked, " + std::to_string(violations) +
                    " violations, log replay " + (replay_ok ? "exact" : "MISMATCH") + ", final |X_a| " +
                    std::to_string(final_a) + "/" + std::to_string(items.size());
        if (unanswerable.size() >= 5) {
            c3.detail += ", |X_-a| epoch 1 " + std::to_string(unanswerable[0]) + " -> epoch 5 " +
                         std::to_string(unanswerable[4]);
        }
    }

    class PerfectOracle final : public AnswerOracle {
    public:
        bool answers(const FeedbackItem&, std::span<const TokenId>) const override { return true; }
        std::uint64_t parameter_hash() const override { return 0; }
    } perfect;
    const std::uint64_t qg_before = qg.parameters().value_hash();
    const DenseArray emb_before = qg.parameters().at("embed.token").value;
    run_collaborative(qg, vocab, perfect, items, fs_cfg);
    const bool qg_frozen = qg.parameters().value_hash() == qg_before &&
                           qg.parameters().at("embed.token").value == emb_before;
    c4.pass = hash_ok && qg_frozen;
    c4.detail = std::string("QA hash ") + (hash_ok ? "unchanged" : "CHANGED") + ", QG under perfect oracle " +
                (qg_frozen ? "bit-unchanged" : "CHANGED");
    return {c3, c4};
}

Outcome toy_learning() {
    const auto t0 = Clock::now();
    const json r = run_default(Protocol::Pretrain, 1, "c5_pretrain", [](ExperimentConfig& c) {
        c.pretrain_on = "train";
        c.train.pretrain_epochs = 2;
    });
    const double secs = seconds_since(t0);
    const json& res = r.at("results");
    const double initial = res.at("qg").at("initial_loss"), final = res.at("qg").at("final_loss");
    const double em = res.at("qa_dev").at("em");
    Outcome o;
    o.pass = final < 0.5 * initial && em >= 0.8 && secs < 900.0;
    o.detail = "QG loss " + fmt("%.3f", initial) + " -> " + fmt("%.3f", final) + " (ratio " + fmt("%.3f", final / initial) +
               "), QA dev EM " + fmt("%.3f", em) + ", " + fmt("%.0f", secs) + " s";
    return o;
}

double arm_f1(const json& report, const std::string& name) {
    for (const auto& a : report.at("results").at("arms"))
        if (a.at("name") == name) return a.at("dev").at("f1").get<double>();
    throw InvalidArgument("surrogate report lacks arm " + name);
}

std::pair<Outcome, Outcome> surrogate_criteria() {
    std::vector<double> lm, collab, mixed, gold;
    std::string per_seed;
    for (std::uint64_t s : kSeeds) {
        const json r = run_default(Protocol::Surrogate, s, "surrogate_seed" + std::to_string(s));
        lm.push_back(arm_f1(r, "lm_init_generated"));
        collab.push_back(arm_f1(r, "collaborative_generated"));
        mixed.push_back(arm_f1(r, "collaborative_mixed"));
        gold.push_back(arm_f1(r, "gold"));
        per_seed += (per_seed.empty() ? "" : ", ") + fmt("%.1f", 100 * lm.back()) + "/" + fmt("%.1f", 100 * collab.back());
    }
    Outcome c6, c8;
    const double m_lm = median3(lm), m_col = median3(collab);
    c6.pass = 100.0 * (m_col - m_lm) >= 2.0;
    c6.detail = "median dev F1 LM-init " + fmt("%.2f", 100 * m_lm) + " vs collaborative " + fmt("%.2f", 100 * m_col) +
                " (margin " + fmt("%+.2f", 100 * (m_col - m_lm)) + ", per seed " + per_seed + ")";
    const double m_mix = median3(mixed), m_gold = median3(gold);
    c8.pass = 100.0 * (m_gold - m_mix) <= 15.0;
    c8.detail = "median dev F1 gold SP2 + generated SP1 " + fmt("%.2f", 100 * m_mix) + " vs all-gold " +
                fmt("%.2f", 100 * m_gold) + " (gap " + fmt("%.2f", 100 * (m_gold - m_mix)) + ")";
    return {c6, c8};
}

Outcome semisup_trend() {
    std::map<double, std::vector<double>> by_rate;
    std::vector<double> time_ratio;
    for (std::uint64_t s : kSeeds) {
        const std::string name = "semisup_seed" + std::to_string(s);
        const json r = run_default(Protocol::Semisup, s, name);
        for (const auto& row : r.at("results").at("rows")) by_rate[row.at("rate")].push_back(row.at("test_f1"));
        const json t = json::parse(slurp(g_work / name / "timings.json"));
        time_ratio.push_back(t.at("rate_0.90").get<double>() / t.at("rate_0.10").get<double>());
    }
    std::vector<double> med;
    std::string line;
    for (const auto& [rate, v] : by_rate) {
        med.push_back(median3(v));
        line += (line.empty() ? "" : ", ") + fmt("%.1f", rate) + ": " + fmt("%.2f", 100 * med.back());
    }
    bool monotone = true;
    for (std::size_t i = 1; i < med.size(); ++i) monotone = monotone && med[i] >= med[i - 1];
    Outcome o;
    o.pass = by_rate.size() == 4 && monotone && med.back() > med.front();
    o.detail = "median test F1 by rate {" + line + "}" + (monotone ? "" : " NOT monotone") +
               ", wall-clock rate 0.9 / rate 0.1 " + fmt("%.2f", median3(time_ratio));
    return o;
}

Outcome ablation_direction() {
    std::vector<double> enc, dec;
    bool flagged_ok = true;
    for (std::uint64_t s : kSeeds) {
        const json r = run_default(Protocol::Ablation, s, "ablation_seed" + std::to_string(s)).at("results");
        double e = 0, d = 0;
        for (const auto& a : r.at("arms")) {
            if (a.at("name") == "encoder_qa") e = a.at("surrogate").at("dev").at("f1");
            else d = a.at("surrogate").at("dev").at("f1");
        }
        enc.push_back(e);
        dec.push_back(d);
        // The report must flag a reversed direction itself.
        flagged_ok = flagged_ok && r.at("expected_direction_holds").get<bool>() == (e >= d) &&
                     (e >= d) == r.at("deviation").get<std::string>().empty();
    }
    const double me = median3(enc), md = median3(dec);
    Outcome o;
    o.pass = me >= md && flagged_ok;
    o.detail = "median surrogate F1 encoder-QA " + fmt("%.2f", 100 * me) + " vs decoder span head " +
               fmt("%.2f", 100 * md) + (flagged_ok ? "" : ", report flag inconsistent");
    return o;
}

Outcome determinism() {
    const std::vector<Protocol> order = {Protocol::SynthData, Protocol::Pretrain, Protocol::Collab, Protocol::Generate,
                                         Protocol::Surrogate, Protocol::Semisup,  Protocol::Ablation, Protocol::Metrics};
    std::vector<std::string> bad;
    std::size_t files = 0;
    for (int rep = 0; rep < 2; ++rep) {
        const fs::path root = g_work / ("determinism_" + std::to_string(rep));
        fs::remove_all(root);
        for (Protocol p : order) {
            ExperimentConfig c = tiny_experiment(p, (root / protocol_name(p)).string());
            if (p == Protocol::Collab || p == Protocol::Generate) {
                c.qg_checkpoint = (root / "pretrain" / "qg.ckpt").string();
                c.qa_checkpoint = (root / "pretrain" / "qa.ckpt").string();
                c.vocab_path = (root / "pretrain" / "vocab.txt").string();
            }
            if (p == Protocol::Metrics) {
                fs::create_directories(root / "metrics_input");
                std::string lines;
                for (const auto& g : parse_generation_jsonl(slurp(root / "generate" / "generations.jsonl"))) {
                    std::string q;
                    for (const auto& w : g.question) q += (q.empty() ? "" : " ") + w;
                    lines += json{{"generated", q}, {"gold", q + " extra"}}.dump() + "\n";
                }
                const auto in = root / "metrics_input" / "pairs.jsonl";
                write_file(in.string(), lines);
                c.metrics_input = in.string();
            }
            run_protocol(c);
        }
    }
    for (Protocol p : order) {
        const fs::path ra = g_work / "determinism_0", rb = g_work / "determinism_1";
        const fs::path a = ra / protocol_name(p), b = rb / protocol_name(p);
        files += files_under(a).size();
        for (const auto& f : differing_files(a, b, ra, rb)) bad.push_back(protocol_name(p) + "/" + f);
    }
    Outcome o;
    o.pass = bad.empty() && files > 0;
    o.detail = std::to_string(order.size()) + " protocols, " + std::to_string(files) + " files compared, " +
               std::to_string(bad.size()) + " differ";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 5); ++i) o.detail += (i ? ", " : ": ") + bad[i];
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    g_work = fs::absolute("acceptance_runs");
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
        } else {
            g_work = fs::absolute(a);
        }
    }
    fs::create_directories(g_work);
    auto wanted = [&](int n) { return only.empty() || only.count(n); };

    std::vector<std::pair<int, std::string>> names = {
        {1, "gradient integrity"},     {2, "metric oracle equivalence"}, {3, "partition invariants"},
        {4, "frozen-QA contract"},     {5, "toy-task learning"},         {6, "feedback efficacy"},
        {7, "semi-supervised trend"},  {8, "surrogate near-parity"},     {9, "ablation direction"},
        {10, "determinism"}};
    std::map<int, Outcome> out;
    auto guard = [&](std::initializer_list<int> ids, const std::function<void()>& f) {
        bool any = false;
        for (int id : ids) any = any || wanted(id);
        if (!any) return;
        try {
            f();
        } catch (const std::exception& e) {
            for (int id : ids) out[id] = {false, std::string("error: ") + e.what()};
        }
        for (int id : ids) {
            if (!wanted(id) || !out.count(id)) continue;
            std::printf("[%s] %d %s: %s\n", out[id].pass ? "PASS" : "FAIL", id, names[id - 1].second.c_str(),
                        out[id].detail.c_str());
            std::fflush(stdout);
        }
    };

    guard({1}, [&] { out[1] = gradient_integrity(); });
    guard({2}, [&] { out[2] = metric_oracles(); });
    guard({3, 4}, [&] { std::tie(out[3], out[4]) = collaborative_contracts(); });
    guard({5}, [&] { out[5] = toy_learning(); });
    guard({6, 8}, [&] { std::tie(out[6], out[8]) = surrogate_criteria(); });
    guard({7}, [&] { out[7] = semisup_trend(); });
    guard({9}, [&] { out[9] = ablation_direction(); });
    guard({10}, [&] { out[10] = determinism(); });

    std::size_t passed = 0, run = 0;
    for (const auto& [id, o] : out) {
        if (!wanted(id)) continue;
        ++run;
        passed += o.pass;
    }
    std::printf("acceptance: %zu/%zu criteria passed\n", passed, run);
    return passed == run ? 0 : 1;
}
