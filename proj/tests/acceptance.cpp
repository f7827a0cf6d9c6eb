// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. argv[1] is a scratch directory.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "nlprune/analysis.hpp"
#include "nlprune/eval.hpp"
#include "nlprune/pruning.hpp"
#include "nlprune/rankc.hpp"
#include "nlprune/weights_io.hpp"
#include "support/oracles.hpp"
#include "support/toy_data.hpp"

using namespace nlprune;
namespace fs = std::filesystem;

namespace {

/// Collects failed checks for one criterion.
class Checker {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        ok_ = ok_ && ok;
    }
    bool ok() const { return ok_; }
    const std::vector<std::string>& failures() const { return failures_; }

private:
    bool ok_ = true;
    std::vector<std::string> failures_;
};

struct Criterion {
    int id;
    std::string name;
    double limit_seconds;
    std::function<void(Checker&)> body;
};

ActivationStats random_stats(const WeightStore& w, std::mt19937_64& rng, std::size_t tokens) {
    ActivationStats s;
    for (const auto& name : linear_layer_names(w.config()))
        for (std::size_t t = 0; t < tokens; ++t) {
            const auto row = oracle::random_vector(rng, w.at(name).cols(), -2.0, 2.0);
            s.accumulate<double>(name, row);
        }
    return s;
}

// 1
void wanda_equivalence(Checker& c) {
    std::mt19937_64 rng(101);
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t d = 2 + rng() % 15, d_ff = 2 + rng() % 15;
        const ModelConfig cfg{.n_layers = 1, .d_model = d, .n_heads = 1, .d_ff = d_ff, .vocab_size = 257,
                              .max_seq_len = 8, .eos_token_id = 256};
        const auto w = random_weights(cfg, rng());
        const auto stats = random_stats(w, rng, 1 + rng() % 6);
        const auto s = wanda_scores(w, stats);
        for (const auto& name : linear_layer_names(cfg)) {
            const auto W = oracle::weight(w, name);
            const auto& sq = stats.at(name).sq_sums;
            for (std::size_t i = 0; i < W.size(); ++i)
                for (std::size_t j = 0; j < W[i].size(); ++j) {
                    const double expect = std::fabs(W[i][j]) * std::sqrt(sq[j]);
                    c.expect(oracle::rel_err(s.at(name)(i, j), expect) <= 1e-6, "wanda mismatch in " + name);
                }
        }
        const auto r = ratio_scores(w, stats, stats);
        for (const auto& name : s.names()) {
            const auto a = s.at(name).data(), b = r.at(name).data();
            for (std::size_t k = 0; k < a.size(); ++k)
                c.expect(std::fabs(a[k] - b[k]) <= 2.0 * std::numeric_limits<double>::epsilon() * std::fabs(a[k]),
                         "ratio(X, X) differs from wanda in " + name);
        }
    }
}

// 2
void mask_exactness(Checker& c, const fs::path& work) {
    const ModelConfig cfg{.n_layers = 2, .d_model = 20, .n_heads = 4, .d_ff = 52, .vocab_size = 257,
                          .max_seq_len = 32, .eos_token_id = 256};
    std::mt19937_64 rng(202);
    const auto w = random_weights(cfg, 202);
    const auto stats = random_stats(w, rng, 4);
    const auto scores = wanda_scores(w, stats);
    for (int pct : {0, 25, 30, 50, 100}) {
        const auto mask = build_mask(scores, pct / 100.0);
        for (const auto& name : linear_layer_names(cfg)) {
            const auto& k = mask.keep.at(name);
            const std::size_t expect = static_cast<std::size_t>(pct) * k.cols() / 100;
            for (std::size_t i = 0; i < k.rows(); ++i) {
                const auto row = k.row(i);
                c.expect(static_cast<std::size_t>(std::count(row.begin(), row.end(), 0)) == expect,
                         "alpha " + std::to_string(pct) + "% wrong count in " + name);
            }
        }
    }
    const fs::path dir = work / "mask_exactness";
    fs::remove_all(dir);
    save_weights(w, dir / "model.nlw");
    write_file(dir / "stats.bin", serialize_stats(stats));
    cli::PruneOptions opt;
    opt.model = dir / "model.nlw";
    opt.stats_x = dir / "stats.bin";
    opt.alpha = 0.0;
    opt.out_dir = dir / "out";
    cli::cmd_prune(opt);
    c.expect(read_file(opt.out_dir / cli::kPrunedModelFile) == read_file(opt.model), "alpha=0 changed the model");
}

// 3
void activation_stats_oracle(Checker& c) {
    const ModelConfig cfg{.n_layers = 4, .d_model = 64, .n_heads = 4, .d_ff = 256, .vocab_size = 257,
                          .max_seq_len = 1024, .eos_token_id = 256};
    const auto w = random_weights(cfg, 303);
    std::mt19937_64 rng(303);
    TokenSeq t(1000);
    for (auto& id : t) id = static_cast<TokenId>(rng() % cfg.vocab_size);
    const CaptureSpec all = CaptureSpec::all(cfg);
    const auto got = forward_with_capture(w, t, all);
    const auto ref = oracle::reference_forward(w, t);
    double worst = 0.0;
    for (const auto& [name, acts] : ref.inputs) {
        const auto e = oracle::column_norms(acts);
        const auto g = got.stats.at(name).norms();
        c.expect(got.stats.at(name).token_count == t.size(), "token count for " + name);
        for (std::size_t j = 0; j < e.size(); ++j) worst = std::max(worst, oracle::rel_err(g[j], e[j]));
    }
    for (const auto& [block, acts] : ref.residual) {
        const auto e = oracle::column_norms(acts);
        const auto g = got.stats.at(residual_name(block)).norms();
        for (std::size_t j = 0; j < e.size(); ++j) worst = std::max(worst, oracle::rel_err(g[j], e[j]));
    }
    c.expect(worst <= 1e-5, "stats vs materialized norms rel err " + std::to_string(worst));

    double worst_merge = 0.0;
    for (std::size_t k : {1u, 400u, 999u}) {
        CaptureSpec head = all, tail = all;
        head.position_end = k;
        tail.position_begin = k;
        ActivationStats a, b;
        forward_accumulate(w, t, head, a);
        forward_accumulate(w, t, tail, b);
        const auto merged = merge_stats(a, b);
        for (const auto& [name, acc] : got.stats.layers) {
            const auto x = merged.at(name).norms(), y = acc.norms();
            c.expect(merged.at(name).token_count == acc.token_count, "merged token count for " + name);
            for (std::size_t j = 0; j < x.size(); ++j) worst_merge = std::max(worst_merge, oracle::rel_err(x[j], y[j]));
        }
    }
    c.expect(worst_merge <= 1e-6, "chunked vs whole rel err " + std::to_string(worst_merge));
}

// 4
void overlap_suite(Checker& c) {
    std::mt19937_64 rng(404);
    std::vector<RankedFeatures> fs;
    std::vector<std::vector<double>> vs;
    for (int i = 0; i < 4; ++i) {
        vs.push_back(oracle::random_vector(rng, 40, 0.0, 5.0));
        fs.push_back(rank_features("s" + std::to_string(i), 0, vs.back()));
    }
    const auto m = overlap_matrix(fs, 30);
    for (std::size_t i = 0; i < fs.size(); ++i) c.expect(m.values(i, i) == 0.0, "diagonal not zero");
    std::vector<double> rev(vs[0].size());
    for (std::size_t i = 0; i < rev.size(); ++i) rev[i] = -vs[0][i];
    const auto a = top_bottom_sets(fs[0], 30), b = top_bottom_sets(rank_features("r", 0, rev), 30);
    c.expect(overlap_ratio(a.top, b.bottom) == 1.0, "reversal ratio not 1");
    c.expect(overlap_ratio({1, 2, 3}, {2, 3, 9}) == 2.0 / 3.0, "hand case not 2/3");

    const std::map<std::string, SourceKind> kinds = {
        {"s0", SourceKind::mono}, {"s1", SourceKind::trans}, {"s2", SourceKind::mono}, {"s3", SourceKind::trans}};
    OverlapMatrix rnd = m;
    for (double& v : rnd.values.data()) v = oracle::random_vector(rng, 1)[0];
    const auto q = quadrant_averages(rnd, kinds);
    std::map<std::pair<bool, bool>, std::vector<double>> groups;
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t col = 0; col < 4; ++col)
            groups[{r % 2 == 1, col % 2 == 1}].push_back(rnd.values(r, col));
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    c.expect(std::fabs(*q.mono_mono - mean(groups[{false, false}])) <= 1e-12, "mono/mono quadrant");
    c.expect(std::fabs(*q.mono_trans - mean(groups[{false, true}])) <= 1e-12, "mono/trans quadrant");
    c.expect(std::fabs(*q.trans_mono - mean(groups[{true, false}])) <= 1e-12, "trans/mono quadrant");
    c.expect(std::fabs(*q.trans_trans - mean(groups[{true, true}])) <= 1e-12, "trans/trans quadrant");
}

// 5
void rankc_suite(Checker& c, const fs::path& work) {
    for (std::size_t n : {1u, 2u, 3u}) {
        const auto w = rank_weights(n);
        double z = 0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(-static_cast<double>(j));
        for (std::size_t j = 0; j < n; ++j)
            c.expect(std::fabs(w[j] - std::exp(-static_cast<double>(j)) / z) <= 1e-6, "rank weight mismatch");
    }
    const auto w3 = rank_weights(3);
    c.expect(std::fabs(w3[0] - 0.6652409) <= 1e-6 && std::fabs(w3[1] - 0.2447285) <= 1e-6 &&
                 std::fabs(w3[2] - 0.0900306) <= 1e-6,
             "three-label weights");
    const std::vector<std::string> abc = {"A", "B", "C"};
    c.expect(std::fabs(consistency(abc, {"B", "A", "C"}) - 0.3347591) <= 1e-6, "swap-first consistency");
    c.expect(std::fabs(consistency(abc, {"C", "B", "A"}) - 0.2123949) <= 1e-6, "reversed consistency");
    const fs::path dir = work / "rankc";
    fs::remove_all(dir);
    write_file(dir / "p.csv", "id,ranking,gold,log_likelihoods\n1,A|B|C,A,-1|-2|-3\n2,C|A|B,B,-1|-2|-3\n3,B|C|A,B,-1|-1|-4\n");
    c.expect(cli::cmd_rankc({dir / "p.csv", dir / "p.csv", dir / "out"}) == 1.0, "rankc(file, file) != 1");
}

// 6
void cloze_oracle(Checker& c) {
    const ModelConfig cfg{.n_layers = 2, .d_model = 32, .n_heads = 4, .d_ff = 64, .vocab_size = 257,
                          .max_seq_len = 128, .eos_token_id = 256};
    const auto w = random_weights(cfg, 606);
    const auto tok = Tokenizer::bytes(cfg);
    const auto task = marc_task();
    ActivationStats unit;
    for (const auto& name : linear_layer_names(cfg)) {
        const std::vector<double> ones(w.at(name).cols(), 1.0);
        unit.accumulate<double>(name, ones);
    }
    const auto masked = apply_mask(w, build_mask(wanda_scores(w, unit), 0.0));
    const auto sents = toy::parallel_sentences(50, 606);
    for (std::size_t i = 0; i < sents.size(); ++i) {
        const EvalExample ex{{{"review", sents[i].first + "."}}, i % 2 ? "positive" : "negative"};
        const auto got = classify_zero_shot(w, tok, task, ex);
        std::vector<std::pair<std::string, double>> naive;
        for (const auto& label : task.labels()) {
            const auto ids = tok.encode(task.render(ex, label));
            naive.emplace_back(label, oracle::naive_sequence_log_prob(oracle::reference_forward(w, ids).logits, ids));
        }
        const std::string best = naive[1].second > naive[0].second ? naive[1].first : naive[0].first;
        c.expect(got.top() == best, "ranking differs from naive scoring on example " + std::to_string(i));
        for (const auto& [label, ll] : got.entries) {
            const double e = label == naive[0].first ? naive[0].second : naive[1].second;
            c.expect(std::fabs(ll - e) <= 1e-5, "log-likelihood differs on example " + std::to_string(i));
        }
        c.expect(classify_zero_shot(masked, tok, task, ex).labels() == got.labels(),
                 "all-true mask changed ranking on example " + std::to_string(i));
    }
}

// 7
void template_fidelity(Checker& c) {
    const std::string x = xnli_task().render({{{"premise", "A"}, {"hypothesis", "B"}}, "entailment"}, "entailment");
    c.expect(x == "A, right? Yes, B", "xnli rendered as '" + x + "'");
    const std::string m = marc_task().render({{{"review", "Good."}}, "positive"}, "positive");
    c.expect(m == "Good. It is positive", "marc rendered as '" + m + "'");
}

// 8
void bleu_bootstrap(Checker& c) {
    const std::vector<std::string> refs = {"the cat sat on the mat", "there is a cat on the mat",
                                           "the dog sat on the log"};
    c.expect(corpus_bleu_text(refs, refs) == 1.0, "bleu(refs, refs) != 1");
    const std::vector<std::string> hyps = {"the cat is on the mat", "there is a cat on the mat today",
                                           "a dog sat on the log"};
    std::vector<std::vector<std::string>> h, r;
    for (const auto& s : hyps) h.push_back(split_whitespace(s));
    for (const auto& s : refs) r.push_back(split_whitespace(s));
    c.expect(std::fabs(corpus_bleu_text(hyps, refs) - oracle::naive_bleu(h, r)) <= 1e-9, "bleu vs naive oracle");

    std::mt19937_64 rng(808);
    std::vector<PredictionRanking> preds;
    std::vector<std::string> golds;
    for (int i = 0; i < 60; ++i) {
        const bool first = rng() % 2;
        preds.push_back({{{first ? "a" : "b", -1.0}, {first ? "b" : "a", -2.0}}});
        golds.push_back(rng() % 2 ? "a" : "b");
    }
    c.expect(paired_bootstrap(preds, preds, golds, 1000, 1) == 1.0, "self bootstrap p != 1");
    std::vector<std::uint8_t> ca(60), cb(60);
    for (std::size_t i = 0; i < 60; ++i) {
        ca[i] = rng() % 3 != 0;
        cb[i] = rng() % 2;
    }
    c.expect(paired_bootstrap_correct(ca, cb, 1000, 7) == paired_bootstrap_correct(ca, cb, 1000, 7),
             "bootstrap not seed-deterministic");
}

/// Runs calibrate -> prune -> eval into `dir`.
void pipeline(const fs::path& data, const fs::path& dir) {
    cli::CalibrateOptions cal;
    cal.model = data / "model.nlw";
    cal.corpus = data / "en_fr.tsv";
    cal.n_demos = 8;
    cal.n_shots = 2;
    cal.seed = 99;
    cal.out_dir = dir / "calibrate";
    cli::cmd_calibrate(cal);
    cli::PruneOptions pr;
    pr.model = cal.model;
    pr.stats_x = cal.out_dir / cli::kStatsFile;
    pr.alpha = 0.3;
    pr.out_dir = dir / "prune";
    cli::cmd_prune(pr);
    cli::EvalOptions ev;
    ev.model = pr.out_dir / cli::kPrunedModelFile;
    ev.task = "xnli";
    ev.data = data / "xnli.tsv";
    ev.seed = 99;
    ev.out_dir = dir / "eval";
    cli::cmd_eval(ev);
}

std::string manifest_without_time(const fs::path& p) {
    auto j = nlohmann::json::parse(read_file(p));
    j.erase("timestamp");
    return j.dump();
}

// 9
void end_to_end(Checker& c, const fs::path& work) {
    const fs::path root = work / "end_to_end";
    fs::remove_all(root);
    const fs::path data = root / "data";
    cli::InitOptions init;
    init.config = {.n_layers = 2, .d_model = 32, .n_heads = 4, .d_ff = 64, .vocab_size = 257, .max_seq_len = 256,
                   .eos_token_id = 256};
    init.seed = 909;
    init.out = data / "model.nlw";
    cli::cmd_init(init);
    toy::write_bilingual(data / "en_fr.tsv", 50, 909);
    toy::write_xnli(data / "xnli.tsv", 20, 910);
    const fs::path run = root / "run";
    const fs::path first = root / "first";
    pipeline(data, run);
    fs::copy(run, first, fs::copy_options::recursive);
    pipeline(data, run);
    for (const auto& e : fs::recursive_directory_iterator(first)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), first);
        const bool same = rel.filename() == cli::kManifestFile
                              ? manifest_without_time(e.path()) == manifest_without_time(run / rel)
                              : read_file(e.path()) == read_file(run / rel);
        c.expect(same, "rerun artifact differs: " + rel.string());
    }

    const auto w = load_weights(data / "model.nlw");
    const auto mask = load_mask(run / "prune" / cli::kMaskFile);
    const auto pruned = load_weights(run / "prune" / cli::kPrunedModelFile);
    auto zeroed = w;
    for (const auto& name : mask.keep.names()) {
        const auto& k = mask.keep.at(name);
        for (std::size_t i = 0; i < k.rows(); ++i)
            for (std::size_t j = 0; j < k.cols(); ++j)
                if (!k(i, j)) zeroed.at(name)(i, j) = 0.0f;
    }
    const auto tok = Tokenizer::bytes(w.config());
    for (const auto& [en, fr] : toy::parallel_sentences(5, 911)) {
        const auto ids = tok.encode("English: " + en + "\nFrench: " + fr + "\n[EOS]\n");
        c.expect(forward_with_capture(pruned, ids).logits == forward_with_capture(zeroed, ids).logits,
                 "pruned forward differs from zeroed forward");
    }
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "nlprune_acceptance";
    fs::create_directories(work);

    const std::vector<Criterion> criteria = {
        {1, "wanda oracle equivalence", 1.0, wanda_equivalence},
        {2, "mask exactness", 5.0, [&](Checker& c) { mask_exactness(c, work); }},
        {3, "activation-stats oracle", 10.0, activation_stats_oracle},
        {4, "overlap-ratio suite", 1.0, overlap_suite},
        {5, "rankc suite", 1.0, [&](Checker& c) { rankc_suite(c, work); }},
        {6, "cloze-eval oracle", 30.0, cloze_oracle},
        {7, "template fidelity", 1.0, template_fidelity},
        {8, "bleu and bootstrap", 2.0, bleu_bootstrap},
        {9, "end-to-end determinism", 60.0, [&](Checker& c) { end_to_end(c, work); }},
    };

    int failed = 0;
    for (const auto& cr : criteria) {
        Checker c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            cr.body(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < cr.limit_seconds;
        const bool pass = c.ok() && in_time;
        failed += !pass;
        std::ostringstream line;
        line << (pass ? "[PASS] " : "[FAIL] ") << cr.id << " " << cr.name << " (" << std::fixed << std::setprecision(3)
             << secs << " s, limit " << std::setprecision(0) << cr.limit_seconds << " s)";
        std::cout << line.str() << "\n";
        for (const auto& f : c.failures()) std::cout << "       " << f << "\n";
        if (!in_time) std::cout << "       exceeded runtime limit\n";
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
