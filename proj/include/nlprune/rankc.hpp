// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

// Ranking-based cross-lingual consistency (RankC).

#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nlprune/common.hpp"
#include "nlprune/eval.hpp"
#include "nlprune/io.hpp"

namespace nlprune {

/// w_j = e^{|Y|-j} / sum_k e^{|Y|-k}, j = 1..|Y|, natural base.
inline std::vector<double> rank_weights(std::size_t y_count) {
    if (y_count == 0) throw Error("rank_weights: label set is empty");
    std::vector<double> w(y_count);
    double sum = 0.0;
    for (std::size_t j = 0; j < y_count; ++j) sum += (w[j] = std::exp(-static_cast<double>(j)));
    for (double& v : w) v /= sum;
    return w;
}

/// |top-j(a) intersect top-j(b)| / j.
inline double precision_at_j(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t j) {
    if (j == 0 || j > a.size() || j > b.size()) throw Error("precision_at_j: j out of range");
    std::set<std::string> ta(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(j));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < j; ++i) hits += ta.count(b[i]);
    return static_cast<double>(hits) / static_cast<double>(j);
}

inline double consistency(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.size() != a.size() || sb.size() != b.size()) throw Error("consistency: ranking repeats a label");
    if (sa != sb) throw Error("consistency: rankings cover different label sets");
    double num = 0.0, den = 0.0;
    for (std::size_t j = 1; j <= a.size(); ++j) {
        const double w = std::exp(-static_cast<double>(j - 1));
        num += w * precision_at_j(a, b, j);
        den += w;
    }
    return num / den;
}

inline double consistency(const PredictionRanking& a, const PredictionRanking& b) {
    return consistency(a.labels(), b.labels());
}

using RankingPair = std::pair<std::vector<std::string>, std::vector<std::string>>;

/// Mean per-example consistency between two languages' rankings.
inline double rankc(const std::vector<RankingPair>& pairs) {
    if (pairs.empty()) throw Error("rankc: no example pairs");
    const std::size_t y = pairs.front().first.size();
    double sum = 0.0;
    for (const auto& [a, b] : pairs) {
        if (a.size() != y || b.size() != y) throw Error("rankc: label-set size differs across examples");
        sum += consistency(a, b);
    }
    return sum / static_cast<double>(pairs.size());
}

/// Mean of RankC(en, l) over the supplied languages.
inline double averaged_rankc(const std::vector<std::vector<RankingPair>>& per_language) {
    if (per_language.empty()) throw Error("averaged_rankc: no languages");
    double sum = 0.0;
    for (const auto& p : per_language) sum += rankc(p);
    return sum / static_cast<double>(per_language.size());
}

// Prediction files: CSV with header "id","ranking",... where ranking is the
// labels best-first joined by '|'. Extra columns are ignored on read.

struct StoredPrediction {
    std::string id;
    std::vector<std::string> ranking;
};

inline std::string predictions_csv(const std::vector<std::string>& ids, const std::vector<PredictionRanking>& preds,
                                   const std::vector<std::string>& golds) {
    if (ids.size() != preds.size() || golds.size() != preds.size()) throw Error("predictions_csv: length mismatch");
    CsvWriter csv;
    csv.text("id").text("ranking").text("gold").text("log_likelihoods").end_row();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        std::string ranking, scores;
        for (const auto& [label, ll] : preds[i].entries) {
            if (!ranking.empty()) {
                ranking += '|';
                scores += '|';
            }
            ranking += label;
            scores += format_number(ll);
        }
        csv.text(ids[i]).text(ranking).text(golds[i]).text(scores).end_row();
    }
    return csv.str();
}

inline std::vector<StoredPrediction> parse_predictions_csv(std::string_view text, std::string_view origin = "predictions") {
    const auto rows = parse_csv(text);
    if (rows.empty() || rows.front().size() < 2 || rows.front()[0] != "id" || rows.front()[1] != "ranking")
        throw Error(std::string(origin) + ": expected header starting with id,ranking");
    std::vector<StoredPrediction> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() < 2)
            throw Error(std::string(origin) + ": row " + std::to_string(r + 1) + " has fewer than two columns");
        StoredPrediction p{rows[r][0], split(rows[r][1], '|')};
        if (p.ranking.empty() || p.ranking.front().empty())
            throw Error(std::string(origin) + ": row " + std::to_string(r + 1) + " has an empty ranking");
        out.push_back(std::move(p));
    }
    return out;
}

/// Pairs two prediction lists by position, requiring matching ids.
inline std::vector<RankingPair> align_predictions(const std::vector<StoredPrediction>& a,
                                                  const std::vector<StoredPrediction>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
        if (a[i].id != b[i].id)
            throw Error("prediction ids misaligned at row " + std::to_string(i + 1) + ": '" + a[i].id + "' vs '" +
                        b[i].id + "'");
    if (a.size() != b.size()) {
        const auto& longer = a.size() > b.size() ? a : b;
        throw Error("prediction files differ in length; first unmatched id '" + longer[n].id + "'");
    }
    std::vector<RankingPair> pairs;
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(a[i].ranking, b[i].ranking);
    return pairs;
}

}  // namespace nlprune
