// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

// Few-shot demonstrations used as calibration data.
//
//   translation shot:  "{src}: {s}\n{tgt}: {t}\n[EOS]\n"
//   monolingual shot:  "{lang}: {s}\n[EOS]\n"
//
// "[EOS]" is replaced by the model's eos token at tokenization.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nlprune/common.hpp"
#include "nlprune/io.hpp"
#include "nlprune/tokenizer.hpp"

namespace nlprune {

struct BilingualPair {
    std::string src_text;
    std::string tgt_text;

    friend bool operator==(const BilingualPair&, const BilingualPair&) = default;
};

enum class DemoKind { translation, monolingual };

struct Demonstration {
    std::string text;
    DemoKind kind = DemoKind::translation;
    std::string src_name;  // the single language for monolingual demos
    std::string tgt_name;
    std::size_t shots = 0;

    friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

inline Demonstration build_translation_demo(std::span<const BilingualPair> pairs, const std::string& src_name,
                                            const std::string& tgt_name) {
    if (pairs.empty()) throw Error("translation demo needs at least one pair");
    if (trim(src_name).empty() || trim(tgt_name).empty()) throw Error("language names must be non-empty");
    Demonstration d{.text = {}, .kind = DemoKind::translation, .src_name = src_name, .tgt_name = tgt_name, .shots = pairs.size()};
    for (const auto& p : pairs) {
        d.text += src_name + ": " + p.src_text + "\n";
        d.text += tgt_name + ": " + p.tgt_text + "\n";
        d.text += std::string(kEosMarker) + "\n";
    }
    return d;
}

inline Demonstration build_monolingual_demo(std::span<const std::string> sents, const std::string& lang_name) {
    if (sents.empty()) throw Error("monolingual demo needs at least one sentence");
    if (trim(lang_name).empty()) throw Error("language name must be non-empty");
    Demonstration d{.text = {}, .kind = DemoKind::monolingual, .src_name = lang_name, .tgt_name = {}, .shots = sents.size()};
    for (const auto& s : sents) {
        d.text += lang_name + ": " + s + "\n";
        d.text += std::string(kEosMarker) + "\n";
    }
    return d;
}

/// Appends the test sentence and the open target-language line.
inline std::string build_translation_prompt(const Demonstration& demo, const std::string& s_test) {
    if (demo.kind != DemoKind::translation) throw Error("translation prompt needs a translation demonstration");
    if (trim(s_test).empty()) throw Error("translation prompt: empty test sentence");
    return demo.text + demo.src_name + ": " + s_test + "\n" + demo.tgt_name + ":";
}

/// How each drawn group of pairs is rendered.
struct DemoSpec {
    enum class Side { both, source, target };
    Side side = Side::both;
    std::string src_name;
    std::string tgt_name;

    static DemoSpec translation(std::string src, std::string tgt) { return {Side::both, std::move(src), std::move(tgt)}; }
    static DemoSpec source_only(std::string src) { return {Side::source, std::move(src), {}}; }
    static DemoSpec target_only(std::string tgt) { return {Side::target, {}, std::move(tgt)}; }
};

struct CalibrationSet {
    std::vector<Demonstration> demos;
    std::size_t n_shots = 0;
    std::uint64_t seed = 0;
    std::string source;
    std::vector<std::size_t> drawn;  // corpus indices in draw order, N * n_shots of them
};

/// Draws `count` distinct indices from [0, n) uniformly (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
    if (count > n) throw Error("cannot draw " + std::to_string(count) + " distinct items from " + std::to_string(n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

namespace detail {

inline void check_calibration_sizes(std::size_t available, std::size_t n_demos, std::size_t n_shots) {
    if (n_demos == 0 || n_shots == 0) throw Error("calibration: demo and shot counts must be positive");
    const std::size_t required = n_demos * n_shots;
    if (available < required)
        throw Error("calibration corpus too small: need " + std::to_string(required) + " items (" +
                    std::to_string(n_demos) + " demos x " + std::to_string(n_shots) + " shots), have " +
                    std::to_string(available));
}

}  // namespace detail

/// Draws n_demos * n_shots distinct pairs with `seed`, groups them in draw
/// order into n_demos demonstrations of n_shots each, and renders per `spec`.
inline CalibrationSet assemble_calibration(std::span<const BilingualPair> corpus, std::size_t n_demos,
                                           std::size_t n_shots, const DemoSpec& spec, std::uint64_t seed) {
    detail::check_calibration_sizes(corpus.size(), n_demos, n_shots);
    Rng rng(seed);
    CalibrationSet set{.demos = {}, .n_shots = n_shots, .seed = seed, .source = {}, .drawn = {}};
    set.drawn = sample_without_replacement(corpus.size(), n_demos * n_shots, rng);
    for (std::size_t d = 0; d < n_demos; ++d) {
        std::vector<BilingualPair> group;
        for (std::size_t s = 0; s < n_shots; ++s) group.push_back(corpus[set.drawn[d * n_shots + s]]);
        if (spec.side == DemoSpec::Side::both) {
            set.demos.push_back(build_translation_demo(group, spec.src_name, spec.tgt_name));
        } else {
            std::vector<std::string> sents;
            for (const auto& p : group) sents.push_back(spec.side == DemoSpec::Side::source ? p.src_text : p.tgt_text);
            set.demos.push_back(
                build_monolingual_demo(sents, spec.side == DemoSpec::Side::source ? spec.src_name : spec.tgt_name));
        }
    }
    switch (spec.side) {
        case DemoSpec::Side::both: set.source = "translation " + spec.src_name + "-" + spec.tgt_name; break;
        case DemoSpec::Side::source: set.source = "monolingual " + spec.src_name + " (source side)"; break;
        case DemoSpec::Side::target: set.source = "monolingual " + spec.tgt_name + " (target side)"; break;
    }
    return set;
}

/// Same draw procedure over a monolingual sentence list.
inline CalibrationSet assemble_monolingual_calibration(std::span<const std::string> sentences, std::size_t n_demos,
                                                       std::size_t n_shots, const std::string& lang_name,
                                                       std::uint64_t seed) {
    detail::check_calibration_sizes(sentences.size(), n_demos, n_shots);
    Rng rng(seed);
    CalibrationSet set{.demos = {}, .n_shots = n_shots, .seed = seed, .source = "monolingual " + lang_name, .drawn = {}};
    set.drawn = sample_without_replacement(sentences.size(), n_demos * n_shots, rng);
    for (std::size_t d = 0; d < n_demos; ++d) {
        std::vector<std::string> group;
        for (std::size_t s = 0; s < n_shots; ++s) group.push_back(sentences[set.drawn[d * n_shots + s]]);
        set.demos.push_back(build_monolingual_demo(group, lang_name));
    }
    return set;
}

// Corpus readers.

/// `src<TAB>tgt` per line; '#' comment lines and blank lines are skipped.
inline std::vector<BilingualPair> parse_bilingual_tsv(std::string_view text, std::string_view origin = "corpus") {
    std::vector<BilingualPair> pairs;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        const auto where = std::string(origin) + ":" + std::to_string(line_no);
        if (tab == std::string_view::npos) throw Error(where + ": expected src<TAB>tgt");
        const auto src = trim(line.substr(0, tab));
        const auto tgt = trim(line.substr(tab + 1));
        if (src.empty() || tgt.empty()) throw Error(where + ": empty side in bilingual pair");
        if (tgt.find('\t') != std::string_view::npos) throw Error(where + ": more than two columns");
        pairs.push_back({std::string(src), std::string(tgt)});
    }
    return pairs;
}

inline std::vector<BilingualPair> read_bilingual_tsv(const std::filesystem::path& path) {
    return parse_bilingual_tsv(read_file(path), path.string());
}

/// One sentence per line; blank lines skipped.
inline std::vector<std::string> read_monolingual(const std::filesystem::path& path) {
    std::vector<std::string> out;
    for (const auto& l : read_lines(path)) {
        const auto t = trim(l);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

/// Regular files of a directory concatenated in lexicographic filename
/// order. A plain file path is read as-is.
inline std::string read_text_corpus(const std::filesystem::path& path) {
    if (!std::filesystem::is_directory(path)) return read_file(path);
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    std::string text;
    for (const auto& f : files) text += read_file(f);
    return text;
}

}  // namespace nlprune
