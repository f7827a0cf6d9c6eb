// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <iostream>
#include <set>

#include <nlohmann/json.hpp>

#include "nlprune/analysis.hpp"
#include "nlprune/demos.hpp"
#include "nlprune/eval.hpp"
#include "nlprune/pruning.hpp"
#include "nlprune/rankc.hpp"
#include "nlprune/tokenizer.hpp"
#include "nlprune/weights_io.hpp"

namespace nlprune::cli {
namespace {

using json = nlohmann::json;

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[md[i] >> 4];
        out += kHex[md[i] & 15];
    }
    return out;
}

/// Collects the reproducibility record for one run.
class Manifest {
public:
    explicit Manifest(std::string subcommand, std::uint64_t seed) {
        doc_["subcommand"] = std::move(subcommand);
        doc_["tool_version"] = kToolVersion;
        doc_["seed"] = seed;
        doc_["flags"] = json::object();
        doc_["inputs"] = json::object();
        doc_["outputs"] = json::array();
    }

    template <typename T>
    void flag(const std::string& name, const T& value) {
        doc_["flags"][name] = value;
    }

    void input(const fs::path& path) { doc_["inputs"][path.string()] = sha256_hex(read_text_corpus(path)); }

    /// Writes `bytes` to out_dir/name and records it.
    void output(const fs::path& out_dir, std::string_view name, std::string_view bytes) {
        write_file(out_dir / name, bytes);
        doc_["outputs"].push_back(std::string(name));
    }

    void write(const fs::path& out_dir) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        doc_["timestamp"] = buf;
        write_file(out_dir / kManifestFile, doc_.dump(2) + "\n");
    }

private:
    json doc_;
};

Tokenizer make_tokenizer(const WeightStore& w, const std::optional<fs::path>& vocab) {
    return vocab ? Tokenizer::from_vocab_file(*vocab, w.config()) : Tokenizer::bytes(w.config());
}

std::string path_stem(const fs::path& p) { return p.stem().string(); }

/// Streams demonstrations through the model, one forward pass each.
/// Sequences longer than the context are truncated; the count is returned.
std::size_t accumulate_demos(const WeightStore& w, const Tokenizer& tok, const std::vector<Demonstration>& demos,
                             const CaptureSpec& capture, ActivationStats& stats) {
    std::size_t truncated = 0;
    for (const auto& d : demos) {
        TokenSeq ids = tok.encode(d.text);
        if (ids.size() > w.config().max_seq_len) {
            ids.resize(w.config().max_seq_len);
            ++truncated;
        }
        if (!ids.empty()) forward_accumulate(w, ids, capture, stats);
    }
    return truncated;
}

CalibrationSet calibration_for(const std::string& kind, const fs::path& corpus, const std::string& src,
                               const std::string& tgt, std::size_t n_demos, std::size_t n_shots, std::uint64_t seed) {
    if (kind == "mono") return assemble_monolingual_calibration(read_monolingual(corpus), n_demos, n_shots, src, seed);
    const auto pairs = read_bilingual_tsv(corpus);
    if (kind == "translation" || kind == "trans")
        return assemble_calibration(pairs, n_demos, n_shots, DemoSpec::translation(src, tgt), seed);
    if (kind == "mono-src") return assemble_calibration(pairs, n_demos, n_shots, DemoSpec::source_only(src), seed);
    if (kind == "mono-tgt") return assemble_calibration(pairs, n_demos, n_shots, DemoSpec::target_only(tgt), seed);
    throw Error("unknown calibration kind '" + kind + "'");
}

}  // namespace

SourceSpec SourceSpec::parse(const std::string& text) {
    SourceSpec s;
    for (const auto& part : split(text, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw Error("source spec '" + text + "': expected key=value, got '" + part + "'");
        const std::string key(trim(std::string_view(part).substr(0, eq)));
        const std::string value(trim(std::string_view(part).substr(eq + 1)));
        if (key == "label") s.label = value;
        else if (key == "kind") s.kind = value;
        else if (key == "src" || key == "lang") s.src_lang = value;
        else if (key == "tgt") s.tgt_lang = value;
        else if (key == "corpus") s.corpus = value;
        else throw Error("source spec '" + text + "': unknown key '" + key + "'");
    }
    if (s.label.empty() || s.corpus.empty()) throw Error("source spec '" + text + "': label and corpus are required");
    static const std::set<std::string> kinds = {"trans", "mono", "mono-src", "mono-tgt"};
    if (!kinds.count(s.kind)) throw Error("source spec '" + text + "': kind must be trans, mono, mono-src or mono-tgt");
    if (s.kind == "mono-tgt" && s.tgt_lang.empty()) throw Error("source spec '" + text + "': mono-tgt needs tgt=");
    if (s.kind != "mono-tgt" && s.src_lang.empty()) throw Error("source spec '" + text + "': missing language name");
    if (s.kind == "trans" && s.tgt_lang.empty()) throw Error("source spec '" + text + "': trans needs tgt=");
    return s;
}

void cmd_init(const InitOptions& opt) {
    const WeightStore w = random_weights(opt.config, opt.seed);
    save_weights(w, opt.out);
}

void cmd_calibrate(const CalibrateOptions& opt) {
    Manifest manifest("calibrate", opt.seed);
    const WeightStore w = load_weights(opt.model);
    manifest.input(opt.model);
    const Tokenizer tok = make_tokenizer(w, opt.vocab);
    const CaptureSpec capture = CaptureSpec::all(w.config());
    ActivationStats stats;

    const std::string kind = opt.z_corpus ? "text" : opt.kind;
    manifest.flag("kind", kind);
    std::size_t truncated = 0;
    std::size_t sequences = 0;
    if (kind == "text") {
        // Counter-calibration text: the whole corpus, tokenized once and cut
        // into context-sized windows.
        const fs::path src = opt.z_corpus ? *opt.z_corpus : opt.corpus;
        manifest.input(src);
        manifest.flag("corpus", src.string());
        const TokenSeq ids = tok.encode(read_text_corpus(src));
        if (ids.empty()) throw Error("text corpus " + src.string() + " is empty");
        const std::size_t window = w.config().max_seq_len;
        for (std::size_t start = 0; start < ids.size(); start += window, ++sequences) {
            const std::size_t end = std::min(ids.size(), start + window);
            forward_accumulate(w, std::span<const TokenId>(ids.data() + start, end - start), capture, stats);
        }
    } else {
        manifest.input(opt.corpus);
        manifest.flag("corpus", opt.corpus.string());
        manifest.flag("src_lang", opt.src_lang);
        manifest.flag("tgt_lang", opt.tgt_lang);
        manifest.flag("n_demos", opt.n_demos);
        manifest.flag("n_shots", opt.n_shots);
        const CalibrationSet set =
            calibration_for(opt.kind, opt.corpus, opt.src_lang, opt.tgt_lang, opt.n_demos, opt.n_shots, opt.seed);
        truncated = accumulate_demos(w, tok, set.demos, capture, stats);
        sequences = set.demos.size();
        std::string demos_text;
        for (std::size_t i = 0; i < set.demos.size(); ++i)
            demos_text += "### demo " + std::to_string(i + 1) + "\n" + set.demos[i].text;
        manifest.output(opt.out_dir, kDemosFile, demos_text);
        manifest.flag("source", set.source);
    }
    manifest.flag("model", opt.model.string());
    manifest.flag("sequences", sequences);
    manifest.flag("truncated_sequences", truncated);
    manifest.flag("token_count", stats.layers.empty() ? 0 : stats.layers.begin()->second.token_count);
    manifest.output(opt.out_dir, kStatsFile, serialize_stats(stats));
    manifest.write(opt.out_dir);
}

void cmd_prune(const PruneOptions& opt) {
    Manifest manifest("prune", 0);
    const WeightStore w = load_weights(opt.model);
    manifest.input(opt.model);
    const ActivationStats x = deserialize_stats(read_file(opt.stats_x));
    manifest.input(opt.stats_x);
    std::string provenance = "wanda: " + opt.stats_x.string();
    ScoreMatrix scores;
    if (opt.stats_z) {
        const ActivationStats z = deserialize_stats(read_file(*opt.stats_z));
        manifest.input(*opt.stats_z);
        scores = ratio_scores(w, x, z, opt.eps);
        provenance = "ratio: " + opt.stats_x.string() + " / " + opt.stats_z->string();
    } else {
        scores = wanda_scores(w, x);
    }
    const PruneMask mask = build_mask(scores, opt.alpha, opt.layer_alpha, provenance);
    const WeightStore pruned = apply_mask(w, mask);

    manifest.flag("model", opt.model.string());
    manifest.flag("alpha", opt.alpha);
    manifest.flag("layer_alpha", opt.layer_alpha);
    manifest.flag("eps", opt.eps);
    manifest.flag("scoring", opt.stats_z ? "ratio" : "wanda");
    manifest.output(opt.out_dir, kMaskFile, serialize_mask(mask));
    manifest.output(opt.out_dir, kPrunedModelFile, serialize_weights(pruned));
    manifest.output(opt.out_dir, kSparsityFile, sparsity_csv(mask));
    manifest.write(opt.out_dir);
}

void cmd_overlap(const OverlapOptions& opt) {
    if (opt.sources.empty()) throw Error("overlap: at least one --source is required");
    if (opt.layers.empty()) throw Error("overlap: at least one layer is required");
    Manifest manifest("overlap", opt.seed);
    const WeightStore w = load_weights(opt.model);
    manifest.input(opt.model);
    for (std::size_t l : opt.layers)
        if (l >= w.config().n_layers)
            throw Error("overlap: unknown layer index " + std::to_string(l) + " (model has " +
                        std::to_string(w.config().n_layers) + " blocks)");
    beta_count(w.config().d_model, opt.beta);
    const Tokenizer tok = make_tokenizer(w, opt.vocab);

    // Monolingual sources first, then translation, each group in given order.
    std::vector<SourceSpec> sources;
    for (const auto& s : opt.sources)
        if (!s.is_translation()) sources.push_back(s);
    for (const auto& s : opt.sources)
        if (s.is_translation()) sources.push_back(s);
    std::set<std::string> seen;
    for (const auto& s : sources)
        if (!seen.insert(s.label).second) throw Error("overlap: duplicate source label '" + s.label + "'");

    CaptureSpec capture;
    capture.residual_blocks.insert(opt.layers.begin(), opt.layers.end());
    std::map<std::string, SourceKind> kind_of;
    std::map<std::size_t, std::vector<RankedFeatures>> by_layer;
    json source_flags = json::array();
    for (const auto& s : sources) {
        manifest.input(s.corpus);
        const std::string cal_kind = s.kind == "trans" ? "translation" : s.kind;
        const CalibrationSet set =
            calibration_for(cal_kind, s.corpus, s.src_lang, s.tgt_lang, opt.n_demos, opt.n_shots, opt.seed);
        ActivationStats stats;
        accumulate_demos(w, tok, set.demos, capture, stats);
        for (std::size_t l : opt.layers) by_layer[l].push_back(rank_features(s.label, l, stats.at(residual_name(l)).norms()));
        kind_of[s.label] = s.is_translation() ? SourceKind::trans : SourceKind::mono;
        source_flags.push_back({{"label", s.label}, {"kind", s.kind}, {"src", s.src_lang}, {"tgt", s.tgt_lang},
                                {"corpus", s.corpus.string()}});
    }

    std::vector<QuadrantRow> quadrants;
    for (std::size_t l : opt.layers) {
        const auto& feats = by_layer.at(l);
        const OverlapMatrix m = overlap_matrix(feats, opt.beta);
        const std::string suffix = "_L" + std::to_string(l);
        manifest.output(opt.out_dir, "overlap" + suffix + ".csv", overlap_csv(m));
        manifest.output(opt.out_dir, "overlap" + suffix + ".svg", overlap_svg(m));
        manifest.output(opt.out_dir, "topk" + suffix + ".csv", topk_csv(feats, opt.top_k.empty() ? 20 : opt.top_k.front()));
        manifest.output(opt.out_dir, "unique" + suffix + ".csv", unique_dims_csv(feats, opt.top_k));
        quadrants.push_back(quadrant_averages(m, kind_of));
    }
    manifest.output(opt.out_dir, kQuadrantFile, quadrant_csv(quadrants));
    manifest.flag("model", opt.model.string());
    manifest.flag("sources", source_flags);
    manifest.flag("layers", opt.layers);
    manifest.flag("beta", opt.beta);
    manifest.flag("n_demos", opt.n_demos);
    manifest.flag("n_shots", opt.n_shots);
    manifest.flag("top_k", opt.top_k);
    manifest.write(opt.out_dir);
}

EvalSummary cmd_eval(const EvalOptions& opt) {
    Manifest manifest("eval", opt.seed);
    const WeightStore w = load_weights(opt.model);
    manifest.input(opt.model);
    const Tokenizer tok = make_tokenizer(w, opt.vocab);
    const ClozeTask task = builtin_task(opt.task);
    const auto examples = parse_eval_tsv(task, read_file(opt.data), opt.data.string());
    manifest.input(opt.data);
    if (examples.empty()) throw Error(opt.data.string() + ": no examples");

    std::vector<PredictionRanking> preds;
    std::vector<std::string> golds, ids;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        preds.push_back(classify_zero_shot(w, tok, task, examples[i]));
        golds.push_back(examples[i].gold);
        ids.push_back(std::to_string(i + 1));
    }
    EvalSummary summary{accuracy(preds, golds), examples.size(), std::nullopt};

    if (opt.baseline) {
        manifest.input(*opt.baseline);
        const auto stored = parse_predictions_csv(read_file(*opt.baseline), opt.baseline->string());
        std::vector<StoredPrediction> own;
        for (std::size_t i = 0; i < preds.size(); ++i) own.push_back({ids[i], preds[i].labels()});
        align_predictions(own, stored);
        std::vector<PredictionRanking> base;
        for (const auto& s : stored) {
            PredictionRanking r;
            for (const auto& l : s.ranking) r.entries.emplace_back(l, 0.0);
            base.push_back(std::move(r));
        }
        summary.p_value = paired_bootstrap(preds, base, golds, opt.resamples, opt.seed);
    }

    const std::string weight_id = opt.weight_id.empty() ? path_stem(opt.model) : opt.weight_id;
    CsvWriter csv;
    csv.text("weight_id").text("task").text("language").text("metric").text("value").text("n").text("p_value").end_row();
    csv.text(weight_id).text(task.name()).text(opt.language).text("accuracy").number(summary.accuracy);
    csv.integer(static_cast<long long>(summary.n));
    if (summary.p_value)
        csv.number(*summary.p_value);
    else
        csv.empty();
    csv.end_row();

    manifest.flag("model", opt.model.string());
    manifest.flag("task", opt.task);
    manifest.flag("data", opt.data.string());
    manifest.flag("baseline", opt.baseline ? opt.baseline->string() : "");
    manifest.flag("resamples", opt.resamples);
    manifest.flag("weight_id", weight_id);
    manifest.flag("language", opt.language);
    manifest.output(opt.out_dir, kResultsFile, csv.str());
    manifest.output(opt.out_dir, kPredictionsFile, predictions_csv(ids, preds, golds));
    manifest.write(opt.out_dir);
    return summary;
}

TranslateSummary cmd_translate(const TranslateOptions& opt) {
    opt.gen.validate();
    Manifest manifest("translate", opt.seed);
    const WeightStore w = load_weights(opt.model);
    manifest.input(opt.model);
    const Tokenizer tok = make_tokenizer(w, opt.vocab);
    const auto demo_pairs = read_bilingual_tsv(opt.demo_corpus);
    manifest.input(opt.demo_corpus);
    const auto tests = read_bilingual_tsv(opt.test);
    manifest.input(opt.test);
    if (tests.empty()) throw Error(opt.test.string() + ": no test rows");

    // One fixed n-shot demonstration shared by every test row.
    Rng rng(opt.seed);
    std::vector<BilingualPair> shots;
    for (std::size_t i : sample_without_replacement(demo_pairs.size(), opt.n_shots, rng)) shots.push_back(demo_pairs[i]);
    const Demonstration demo = build_translation_demo(shots, opt.src_lang, opt.tgt_lang);

    std::string hyp_file;
    std::vector<std::string> hyps, refs;
    TranslateSummary summary;
    for (std::size_t row = 0; row < tests.size(); ++row) {
        const TokenSeq prompt = tok.encode(build_translation_prompt(demo, tests[row].src_text));
        if (prompt.size() > w.config().max_seq_len) {
            std::cerr << opt.test.string() << ": row " << row + 1 << ": prompt of " << prompt.size()
                      << " tokens exceeds max_seq_len " << w.config().max_seq_len << ", skipped\n";
            ++summary.skipped;
            hyp_file += "\n";
            continue;
        }
        GenParams gp = opt.gen;
        gp.seed = mix_seed(opt.seed, row);
        TokenSeq out = generate(w, prompt, gp);
        if (auto eos = std::find(out.begin(), out.end(), tok.eos()); eos != out.end()) out.erase(eos, out.end());
        std::string text = tok.decode(out);
        if (auto nl = text.find('\n'); nl != std::string::npos) text.resize(nl);
        text = std::string(trim(text));
        hyp_file += text + "\n";
        hyps.push_back(text);
        refs.push_back(tests[row].tgt_text);
    }
    if (hyps.empty()) throw Error("translate: every test row was skipped");
    summary.scored = hyps.size();
    summary.bleu = corpus_bleu_text(hyps, refs);

    CsvWriter csv;
    csv.text("weight_id").text("src_lang").text("tgt_lang").text("bleu").text("n").text("skipped").end_row();
    csv.text(path_stem(opt.model)).text(opt.src_lang).text(opt.tgt_lang).number(summary.bleu);
    csv.integer(static_cast<long long>(summary.scored)).integer(static_cast<long long>(summary.skipped)).end_row();

    manifest.flag("model", opt.model.string());
    manifest.flag("src_lang", opt.src_lang);
    manifest.flag("tgt_lang", opt.tgt_lang);
    manifest.flag("n_shots", opt.n_shots);
    manifest.flag("max_new_tokens", opt.gen.max_new_tokens);
    manifest.flag("temperature", opt.gen.temperature);
    manifest.flag("top_k", opt.gen.top_k);
    manifest.flag("top_p", opt.gen.top_p);
    manifest.flag("beam_size", 1);
    manifest.output(opt.out_dir, kHypothesesFile, hyp_file);
    manifest.output(opt.out_dir, kBleuFile, csv.str());
    manifest.write(opt.out_dir);
    return summary;
}

double cmd_rankc(const RankcOptions& opt) {
    Manifest manifest("rankc", 0);
    const auto a = parse_predictions_csv(read_file(opt.predictions_a), opt.predictions_a.string());
    const auto b = parse_predictions_csv(read_file(opt.predictions_b), opt.predictions_b.string());
    manifest.input(opt.predictions_a);
    manifest.input(opt.predictions_b);
    const auto pairs = align_predictions(a, b);
    const double score = rankc(pairs);

    CsvWriter per;
    per.text("id").text("consistency").end_row();
    for (std::size_t i = 0; i < pairs.size(); ++i) per.text(a[i].id).number(consistency(pairs[i].first, pairs[i].second)).end_row();
    CsvWriter total;
    total.text("predictions_a").text("predictions_b").text("rankc").text("n").end_row();
    total.text(opt.predictions_a.string()).text(opt.predictions_b.string()).number(score);
    total.integer(static_cast<long long>(pairs.size())).end_row();

    manifest.output(opt.out_dir, kRankcFile, total.str());
    manifest.output(opt.out_dir, kConsistencyFile, per.str());
    manifest.write(opt.out_dir);
    return score;
}

}  // namespace nlprune::cli
