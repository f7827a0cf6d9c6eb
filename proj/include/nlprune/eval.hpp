// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nlprune/common.hpp"
#include "nlprune/model.hpp"
#include "nlprune/tokenizer.hpp"

namespace nlprune {

inline constexpr std::string_view kMaskSlot = "[Mask]";

struct EvalExample {
    std::map<std::string, std::string> fields;
    std::string gold;
};

/// Cloze task: a template with `{field}` placeholders and exactly one
/// "[Mask]" slot, and a verbalizer string for every label.
class ClozeTask {
public:
    ClozeTask(std::string name, std::string pattern, std::vector<std::string> labels,
              std::map<std::string, std::string> verbalizer, std::vector<std::string> fields,
              std::map<std::string, std::string> label_aliases = {})
        : name_(std::move(name)),
          pattern_(std::move(pattern)),
          labels_(std::move(labels)),
          verbalizer_(std::move(verbalizer)),
          fields_(std::move(fields)),
          aliases_(std::move(label_aliases)) {
        if (labels_.empty()) throw Error("task '" + name_ + "': no labels");
        for (const auto& l : labels_)
            if (!verbalizer_.count(l)) throw Error("task '" + name_ + "': label '" + l + "' has no verbalizer entry");
        parse_pattern();
    }

    const std::string& name() const noexcept { return name_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const std::vector<std::string>& fields() const noexcept { return fields_; }

    bool has_label(std::string_view label) const {
        return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
    }

    /// Canonical label for a data-file label: exact match, then alias
    /// (case-insensitive).
    std::string canonical_label(std::string_view raw) const {
        const std::string s(trim(raw));
        if (has_label(s)) return s;
        std::string lower = s;
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        if (has_label(lower)) return lower;
        if (auto it = aliases_.find(lower); it != aliases_.end()) return it->second;
        throw Error("unknown label '" + s + "' for task " + name_);
    }

    std::string render(const EvalExample& ex, std::string_view label) const {
        if (!has_label(label)) throw Error("unknown label '" + std::string(label) + "' for task " + name_);
        std::string out;
        for (const auto& seg : segments_) {
            if (seg.kind == Segment::literal) {
                out += seg.text;
            } else if (seg.kind == Segment::mask) {
                out += verbalizer_.at(std::string(label));
            } else {
                auto it = ex.fields.find(seg.text);
                if (it == ex.fields.end()) throw Error("example lacks field '" + seg.text + "' for task " + name_);
                out += it->second;
            }
        }
        return out;
    }

private:
    struct Segment {
        enum Kind { literal, field, mask } kind;
        std::string text;
    };

    void parse_pattern() {
        std::size_t masks = 0;
        std::size_t i = 0;
        std::string lit;
        auto flush = [&] {
            if (!lit.empty()) segments_.push_back({Segment::literal, std::move(lit)});
            lit.clear();
        };
        while (i < pattern_.size()) {
            if (pattern_.compare(i, kMaskSlot.size(), kMaskSlot) == 0) {
                flush();
                segments_.push_back({Segment::mask, {}});
                ++masks;
                i += kMaskSlot.size();
            } else if (pattern_[i] == '{') {
                const auto close = pattern_.find('}', i);
                if (close == std::string::npos) throw Error("task '" + name_ + "': unterminated placeholder");
                flush();
                std::string field = pattern_.substr(i + 1, close - i - 1);
                if (std::find(fields_.begin(), fields_.end(), field) == fields_.end())
                    throw Error("task '" + name_ + "': template uses undeclared field '" + field + "'");
                segments_.push_back({Segment::field, std::move(field)});
                i = close + 1;
            } else {
                lit += pattern_[i++];
            }
        }
        flush();
        if (masks != 1)
            throw Error("task '" + name_ + "': template must contain exactly one [Mask], found " + std::to_string(masks));
    }

    std::string name_;
    std::string pattern_;
    std::vector<std::string> labels_;
    std::map<std::string, std::string> verbalizer_;
    std::vector<std::string> fields_;
    std::map<std::string, std::string> aliases_;
    std::vector<Segment> segments_;
};

/// English XNLI prompt; numeric aliases follow the common 0/1/2 =
/// entailment/neutral/contradiction encoding.
inline ClozeTask xnli_task() {
    return ClozeTask("xnli", "{premise}, right? [Mask], {hypothesis}", {"entailment", "contradiction", "neutral"},
                     {{"entailment", "Yes"}, {"contradiction", "No"}, {"neutral", "Also"}}, {"premise", "hypothesis"},
                     {{"0", "entailment"}, {"1", "neutral"}, {"2", "contradiction"}});
}

inline ClozeTask marc_task() {
    return ClozeTask("marc", "{review} It is [Mask]", {"negative", "positive"},
                     {{"negative", "negative"}, {"positive", "positive"}}, {"review"},
                     {{"0", "negative"}, {"1", "positive"}});
}

inline ClozeTask builtin_task(std::string_view name) {
    if (name == "xnli") return xnli_task();
    if (name == "marc") return marc_task();
    throw Error("unknown task '" + std::string(name) + "' (expected xnli or marc)");
}

/// Task TSV: the task's fields in order, then the label. Blank lines and
/// '#' comments are skipped; errors carry the line number.
inline std::vector<EvalExample> parse_eval_tsv(const ClozeTask& task, std::string_view text,
                                               std::string_view origin = "data") {
    std::vector<EvalExample> out;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty() || line.front() == '#') continue;
        const auto cols = split(line, '\t');
        const auto where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
        if (cols.size() != task.fields().size() + 1)
            throw Error(where + "expected " + std::to_string(task.fields().size() + 1) + " tab-separated columns, found " +
                        std::to_string(cols.size()));
        EvalExample ex;
        for (std::size_t i = 0; i < task.fields().size(); ++i) {
            const auto v = trim(cols[i]);
            if (v.empty()) throw Error(where + "empty field '" + task.fields()[i] + "'");
            ex.fields[task.fields()[i]] = std::string(v);
        }
        try {
            ex.gold = task.canonical_label(cols.back());
        } catch (const Error& e) {
            throw Error(where + e.what());
        }
        out.push_back(std::move(ex));
    }
    return out;
}

/// Candidate labels by descending log-likelihood; equal scores keep task order.
struct PredictionRanking {
    std::vector<std::pair<std::string, double>> entries;

    const std::string& top() const {
        if (entries.empty()) throw Error("empty prediction ranking");
        return entries.front().first;
    }
    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        for (const auto& e : entries) out.push_back(e.first);
        return out;
    }
};

/// Orders (label, score) pairs given in task order.
inline PredictionRanking rank_candidates(std::vector<std::pair<std::string, double>> scored) {
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return {std::move(scored)};
}

/// Scores every label by the log-likelihood of the whole filled prompt.
inline PredictionRanking classify_zero_shot(const WeightStore& w, const Tokenizer& tok, const ClozeTask& task,
                                            const EvalExample& ex) {
    std::vector<std::pair<std::string, double>> scored;
    for (const auto& label : task.labels()) {
        const TokenSeq ids = tok.encode(task.render(ex, label));
        if (ids.size() > w.config().max_seq_len)
            throw Error("prompt for label '" + label + "' has " + std::to_string(ids.size()) +
                        " tokens, exceeding max_seq_len " + std::to_string(w.config().max_seq_len));
        scored.emplace_back(label, sequence_log_prob(w, ids));
    }
    return rank_candidates(std::move(scored));
}

inline double accuracy(const std::vector<PredictionRanking>& preds, const std::vector<std::string>& golds) {
    if (preds.size() != golds.size()) throw Error("accuracy: predictions and gold labels differ in length");
    if (preds.empty()) throw Error("accuracy: no examples");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].top() == golds[i];
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

inline constexpr std::size_t kDefaultResamples = 1000;

/// Two-sided paired bootstrap over per-example correctness. Each resample
/// draws n indices with replacement; p is the fraction of resamples whose
/// accuracy difference is zero or has the opposite sign of the full-sample
/// difference. A zero full-sample difference gives p = 1.
inline double paired_bootstrap_correct(const std::vector<std::uint8_t>& correct_a,
                                       const std::vector<std::uint8_t>& correct_b, std::size_t resamples,
                                       std::uint64_t seed) {
    if (correct_a.size() != correct_b.size()) throw Error("paired_bootstrap: systems differ in length");
    if (correct_a.empty()) throw Error("paired_bootstrap: no examples");
    if (resamples == 0) throw Error("paired_bootstrap: resamples must be positive");
    const std::size_t n = correct_a.size();
    long long full = 0;
    for (std::size_t i = 0; i < n; ++i) full += static_cast<long long>(correct_a[i]) - correct_b[i];
    if (full == 0) return 1.0;
    Rng rng(seed);
    std::size_t not_supporting = 0;
    for (std::size_t r = 0; r < resamples; ++r) {
        long long diff = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(uniform_index(rng, n));
            diff += static_cast<long long>(correct_a[k]) - correct_b[k];
        }
        if (full > 0 ? diff <= 0 : diff >= 0) ++not_supporting;
    }
    return static_cast<double>(not_supporting) / static_cast<double>(resamples);
}

inline double paired_bootstrap(const std::vector<PredictionRanking>& preds_a, const std::vector<PredictionRanking>& preds_b,
                               const std::vector<std::string>& golds, std::size_t resamples = kDefaultResamples,
                               std::uint64_t seed = 0) {
    if (preds_a.size() != golds.size() || preds_b.size() != golds.size())
        throw Error("paired_bootstrap: predictions and gold labels differ in length");
    std::vector<std::uint8_t> a(golds.size()), b(golds.size());
    for (std::size_t i = 0; i < golds.size(); ++i) {
        a[i] = preds_a[i].top() == golds[i];
        b[i] = preds_b[i].top() == golds[i];
    }
    return paired_bootstrap_correct(a, b, resamples, seed);
}

using Tokens = std::vector<std::string>;

/// Corpus BLEU with one reference per hypothesis: clipped n-gram counts
/// pooled over the corpus, geometric mean of precisions for n = 1..max_n,
/// brevity penalty exp(min(0, 1 - r/c)). Unsmoothed: any zero precision
/// gives 0.
inline double corpus_bleu(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references,
                          std::size_t max_n = 4) {
    if (hypotheses.size() != references.size()) throw Error("corpus_bleu: hypothesis and reference counts differ");
    if (hypotheses.empty()) throw Error("corpus_bleu: empty corpus");
    if (max_n == 0) throw Error("corpus_bleu: max_n must be positive");
    std::vector<std::size_t> matched(max_n, 0), total(max_n, 0);
    std::size_t hyp_len = 0, ref_len = 0;
    for (std::size_t s = 0; s < hypotheses.size(); ++s) {
        const auto& hyp = hypotheses[s];
        const auto& ref = references[s];
        hyp_len += hyp.size();
        ref_len += ref.size();
        for (std::size_t n = 1; n <= max_n; ++n) {
            if (hyp.size() < n) continue;
            std::map<std::vector<std::string>, std::size_t> ref_counts;
            if (ref.size() >= n)
                for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[{ref.begin() + i, ref.begin() + i + n}];
            std::map<std::vector<std::string>, std::size_t> hyp_counts;
            for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[{hyp.begin() + i, hyp.begin() + i + n}];
            for (const auto& [gram, c] : hyp_counts) {
                auto it = ref_counts.find(gram);
                matched[n - 1] += it == ref_counts.end() ? 0 : std::min(c, it->second);
                total[n - 1] += c;
            }
        }
    }
    if (hyp_len == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < max_n; ++n) {
        if (matched[n] == 0 || total[n] == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    }
    const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
    return bp * std::exp(log_sum / static_cast<double>(max_n));
}

/// BLEU over whitespace-split text.
inline double corpus_bleu_text(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                               std::size_t max_n = 4) {
    std::vector<Tokens> h, r;
    for (const auto& s : hypotheses) h.push_back(split_whitespace(s));
    for (const auto& s : references) r.push_back(split_whitespace(s));
    return corpus_bleu(h, r, max_n);
}

}  // namespace nlprune
