// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "nlprune/common.hpp"
#include "nlprune/io.hpp"

using namespace nlprune;
using namespace nlprune::cli;

namespace {

std::map<std::string, double> parse_overrides(const std::vector<std::string>& items) {
    std::map<std::string, double> out;
    for (const auto& item : items) {
        const auto eq = item.rfind('=');
        if (eq == std::string::npos) throw Error("--alpha-override expects layer=value, got '" + item + "'");
        out[item.substr(0, eq)] = parse_number(item.substr(eq + 1), "--alpha-override");
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calibration-driven pruning and evaluation of toy multilingual decoders"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    InitOptions init;
    auto* c_init = app.add_subcommand("init", "Write a seeded random toy model");
    c_init->add_option("--out", init.out, "Output weight file")->required();
    c_init->add_option("--seed", init.seed, "Random seed");
    c_init->add_option("--n-layers", init.config.n_layers)->capture_default_str();
    c_init->add_option("--d-model", init.config.d_model)->capture_default_str();
    c_init->add_option("--n-heads", init.config.n_heads)->capture_default_str();
    c_init->add_option("--d-ff", init.config.d_ff)->capture_default_str();
    c_init->add_option("--vocab-size", init.config.vocab_size)->capture_default_str();
    c_init->add_option("--max-seq-len", init.config.max_seq_len)->capture_default_str();
    c_init->add_option("--eos-id", init.config.eos_token_id)->capture_default_str();

    CalibrateOptions cal;
    std::string z_corpus;
    std::string cal_vocab;
    auto* c_cal = app.add_subcommand("calibrate", "Collect activation statistics over demonstrations");
    c_cal->add_option("--model", cal.model)->required();
    c_cal->add_option("--corpus", cal.corpus, "Bilingual TSV, monolingual text, or text corpus");
    c_cal->add_option("--kind", cal.kind, "translation | mono-src | mono-tgt | mono | text")->capture_default_str();
    c_cal->add_option("--src-lang", cal.src_lang)->capture_default_str();
    c_cal->add_option("--tgt-lang", cal.tgt_lang)->capture_default_str();
    c_cal->add_option("--n-demos", cal.n_demos)->capture_default_str();
    c_cal->add_option("--n-shots", cal.n_shots)->capture_default_str();
    c_cal->add_option("--seed", cal.seed)->capture_default_str();
    c_cal->add_option("--z-corpus", z_corpus, "Counter-calibration text file or directory (implies --kind text)");
    c_cal->add_option("--vocab", cal_vocab, "External vocabulary file");
    c_cal->add_option("--out-dir", cal.out_dir)->required();

    PruneOptions prune;
    std::string stats_z;
    std::vector<std::string> overrides;
    auto* c_prune = app.add_subcommand("prune", "Score, mask and zero weights");
    c_prune->add_option("--model", prune.model)->required();
    c_prune->add_option("--stats", prune.stats_x, "Calibration stats (X)")->required();
    c_prune->add_option("--stats-z", stats_z, "Counter-calibration stats (Z); enables ratio scoring");
    c_prune->add_option("--alpha", prune.alpha, "Pruning ratio per output row")->capture_default_str();
    c_prune->add_option("--alpha-override", overrides, "layer=alpha, repeatable");
    c_prune->add_option("--eps", prune.eps, "Denominator floor for ratio scoring")->capture_default_str();
    c_prune->add_option("--out-dir", prune.out_dir)->required();

    OverlapOptions ov;
    std::vector<std::string> sources;
    std::string ov_vocab;
    auto* c_ov = app.add_subcommand("overlap", "Top/bottom-beta feature overlap across demonstration sources");
    c_ov->add_option("--model", ov.model)->required();
    c_ov->add_option("--source", sources, "label=..,kind=trans|mono|mono-src|mono-tgt,src=..,tgt=..,corpus=..")
        ->required();
    c_ov->add_option("--layers", ov.layers, "Block indices")->delimiter(',')->required();
    c_ov->add_option("--beta", ov.beta)->capture_default_str();
    c_ov->add_option("--n-demos", ov.n_demos)->capture_default_str();
    c_ov->add_option("--n-shots", ov.n_shots)->capture_default_str();
    c_ov->add_option("--top-k", ov.top_k, "k values for top-k and unique-dimension reports")->delimiter(',');
    c_ov->add_option("--seed", ov.seed)->capture_default_str();
    c_ov->add_option("--vocab", ov_vocab);
    c_ov->add_option("--out-dir", ov.out_dir)->required();

    EvalOptions ev;
    std::string baseline, ev_vocab;
    auto* c_ev = app.add_subcommand("eval", "Zero-shot cloze classification");
    c_ev->add_option("--model", ev.model)->required();
    c_ev->add_option("--task", ev.task, "xnli | marc")->capture_default_str();
    c_ev->add_option("--data", ev.data)->required();
    c_ev->add_option("--baseline", baseline, "Baseline predictions CSV for a paired bootstrap test");
    c_ev->add_option("--resamples", ev.resamples)->capture_default_str();
    c_ev->add_option("--seed", ev.seed)->capture_default_str();
    c_ev->add_option("--weight-id", ev.weight_id);
    c_ev->add_option("--lang", ev.language);
    c_ev->add_option("--vocab", ev_vocab);
    c_ev->add_option("--out-dir", ev.out_dir)->required();

    TranslateOptions tr;
    std::string tr_vocab;
    auto* c_tr = app.add_subcommand("translate", "Few-shot translation with BLEU");
    c_tr->add_option("--model", tr.model)->required();
    c_tr->add_option("--demo-corpus", tr.demo_corpus)->required();
    c_tr->add_option("--test", tr.test, "src<TAB>ref")->required();
    c_tr->add_option("--src-lang", tr.src_lang)->capture_default_str();
    c_tr->add_option("--tgt-lang", tr.tgt_lang)->capture_default_str();
    c_tr->add_option("--n-shots", tr.n_shots)->capture_default_str();
    c_tr->add_option("--max-new-tokens", tr.gen.max_new_tokens)->capture_default_str();
    c_tr->add_option("--temperature", tr.gen.temperature)->capture_default_str();
    c_tr->add_option("--top-k", tr.gen.top_k)->capture_default_str();
    c_tr->add_option("--top-p", tr.gen.top_p)->capture_default_str();
    c_tr->add_option("--seed", tr.seed)->capture_default_str();
    c_tr->add_option("--vocab", tr_vocab);
    c_tr->add_option("--out-dir", tr.out_dir)->required();

    RankcOptions rc;
    auto* c_rc = app.add_subcommand("rankc", "Ranking-based consistency between two prediction files");
    c_rc->add_option("--a", rc.predictions_a)->required();
    c_rc->add_option("--b", rc.predictions_b)->required();
    c_rc->add_option("--out-dir", rc.out_dir)->required();

    CLI11_PARSE(app, argc, argv);

    auto opt_path = [](const std::string& s) -> std::optional<std::filesystem::path> {
        if (s.empty()) return std::nullopt;
        return std::filesystem::path(s);
    };

    try {
        if (c_init->parsed()) {
            cmd_init(init);
        } else if (c_cal->parsed()) {
            cal.z_corpus = opt_path(z_corpus);
            cal.vocab = opt_path(cal_vocab);
            if (!cal.z_corpus && cal.corpus.empty()) throw Error("calibrate: --corpus or --z-corpus is required");
            cmd_calibrate(cal);
        } else if (c_prune->parsed()) {
            prune.stats_z = opt_path(stats_z);
            prune.layer_alpha = parse_overrides(overrides);
            cmd_prune(prune);
        } else if (c_ov->parsed()) {
            for (const auto& s : sources) ov.sources.push_back(SourceSpec::parse(s));
            ov.vocab = opt_path(ov_vocab);
            cmd_overlap(ov);
        } else if (c_ev->parsed()) {
            ev.baseline = opt_path(baseline);
            ev.vocab = opt_path(ev_vocab);
            const auto s = cmd_eval(ev);
            std::cout << "accuracy " << format_number(s.accuracy) << " n " << s.n;
            if (s.p_value) std::cout << " p " << format_number(*s.p_value);
            std::cout << "\n";
        } else if (c_tr->parsed()) {
            tr.vocab = opt_path(tr_vocab);
            const auto s = cmd_translate(tr);
            std::cout << "bleu " << format_number(s.bleu) << " scored " << s.scored << " skipped " << s.skipped << "\n";
        } else if (c_rc->parsed()) {
            std::cout << "rankc " << format_number(cmd_rankc(rc)) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
