// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

// Subcommand implementations behind the nlprune CLI. Every command reads
// its inputs, writes its artifacts into out_dir, and writes manifest.json
// beside them. All randomness comes from the seed option.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nlprune/model.hpp"

namespace nlprune::cli {

inline constexpr std::string_view kToolVersion = "0.3.0";

namespace fs = std::filesystem;

struct InitOptions {
    ModelConfig config;
    std::uint64_t seed = 0;
    fs::path out;  // weight file path
};

struct CalibrateOptions {
    fs::path model;
    fs::path corpus;
    std::string kind = "translation";  // translation | mono-src | mono-tgt | mono | text
    std::string src_lang = "English";
    std::string tgt_lang = "French";
    std::size_t n_demos = 100;
    std::size_t n_shots = 4;
    std::uint64_t seed = 0;
    std::optional<fs::path> z_corpus;  // shorthand for kind=text over this path
    std::optional<fs::path> vocab;
    fs::path out_dir;
};

struct PruneOptions {
    fs::path model;
    fs::path stats_x;
    std::optional<fs::path> stats_z;
    double alpha = 0.3;
    std::map<std::string, double> layer_alpha;
    double eps = 1e-8;
    fs::path out_dir;
};

/// One demonstration source for the overlap analysis, given on the command
/// line as comma-separated key=value pairs:
///   label=Zh-En,kind=trans,src=Chinese,tgt=English,corpus=zh_en.tsv
///   label=Zh,kind=mono,lang=Chinese,corpus=zh.txt
///   label=En,kind=mono-tgt,tgt=English,corpus=zh_en.tsv
struct SourceSpec {
    std::string label;
    std::string kind;  // trans | mono | mono-src | mono-tgt
    std::string src_lang;
    std::string tgt_lang;
    fs::path corpus;

    static SourceSpec parse(const std::string& text);
    bool is_translation() const { return kind == "trans"; }
};

struct OverlapOptions {
    fs::path model;
    std::vector<SourceSpec> sources;
    std::vector<std::size_t> layers;
    double beta = 30.0;
    std::size_t n_demos = 100;
    std::size_t n_shots = 4;
    std::vector<std::size_t> top_k = {20};
    std::uint64_t seed = 0;
    std::optional<fs::path> vocab;
    fs::path out_dir;
};

struct EvalOptions {
    fs::path model;
    std::string task = "xnli";
    fs::path data;
    std::optional<fs::path> baseline;
    std::size_t resamples = 1000;
    std::uint64_t seed = 0;
    std::string weight_id;  // defaults to the model file stem
    std::string language;
    std::optional<fs::path> vocab;
    fs::path out_dir;
};

struct TranslateOptions {
    fs::path model;
    fs::path demo_corpus;
    fs::path test;
    std::string src_lang = "English";
    std::string tgt_lang = "French";
    std::size_t n_shots = 4;
    GenParams gen;
    std::uint64_t seed = 0;
    std::optional<fs::path> vocab;
    fs::path out_dir;
};

struct RankcOptions {
    fs::path predictions_a;
    fs::path predictions_b;
    fs::path out_dir;
};

struct EvalSummary {
    double accuracy = 0.0;
    std::size_t n = 0;
    std::optional<double> p_value;
};

struct TranslateSummary {
    double bleu = 0.0;
    std::size_t scored = 0;
    std::size_t skipped = 0;
};

void cmd_init(const InitOptions& opt);
void cmd_calibrate(const CalibrateOptions& opt);
void cmd_prune(const PruneOptions& opt);
void cmd_overlap(const OverlapOptions& opt);
EvalSummary cmd_eval(const EvalOptions& opt);
TranslateSummary cmd_translate(const TranslateOptions& opt);
double cmd_rankc(const RankcOptions& opt);

// Output file names inside out_dir.
inline constexpr std::string_view kStatsFile = "activation_stats.bin";
inline constexpr std::string_view kDemosFile = "demos.txt";
inline constexpr std::string_view kMaskFile = "mask.bin";
inline constexpr std::string_view kPrunedModelFile = "pruned.nlw";
inline constexpr std::string_view kSparsityFile = "sparsity.csv";
inline constexpr std::string_view kQuadrantFile = "quadrants.csv";
inline constexpr std::string_view kResultsFile = "results.csv";
inline constexpr std::string_view kPredictionsFile = "predictions.csv";
inline constexpr std::string_view kHypothesesFile = "hypotheses.txt";
inline constexpr std::string_view kBleuFile = "bleu.csv";
inline constexpr std::string_view kRankcFile = "rankc.csv";
inline constexpr std::string_view kConsistencyFile = "consistency.csv";
inline constexpr std::string_view kManifestFile = "manifest.json";

}  // namespace nlprune::cli
