// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

// Magnitude analysis of feature norms: rankings, top/bottom-beta% overlap
// ratios between demonstrations, quadrant averages and unique top-k dims.

#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nlprune/common.hpp"
#include "nlprune/io.hpp"

namespace nlprune {

inline constexpr double kDefaultBeta = 30.0;

/// Feature norms of one demonstration source at one layer, with the
/// descending order (ties by ascending dimension index).
struct RankedFeatures {
    std::string label;
    std::size_t layer = 0;
    std::vector<double> norms;
    std::vector<std::size_t> order;

    std::size_t dim() const noexcept { return norms.size(); }
};

inline RankedFeatures rank_features(std::string label, std::size_t layer, std::vector<double> norms) {
    RankedFeatures rf{std::move(label), layer, std::move(norms), {}};
    rf.order.resize(rf.norms.size());
    std::iota(rf.order.begin(), rf.order.end(), std::size_t{0});
    std::stable_sort(rf.order.begin(), rf.order.end(),
                     [&](std::size_t a, std::size_t b) { return rf.norms[a] > rf.norms[b]; });
    return rf;
}

struct RankedDim {
    std::size_t dim;
    double norm;
    friend bool operator==(const RankedDim&, const RankedDim&) = default;
};

inline std::vector<RankedDim> topk_report(const RankedFeatures& rf, std::size_t k) {
    if (k == 0 || k > rf.dim())
        throw Error("top-k: k = " + std::to_string(k) + " outside [1, " + std::to_string(rf.dim()) + "]");
    std::vector<RankedDim> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back({rf.order[i], rf.norms[rf.order[i]]});
    return out;
}

/// Dimension index sets, each sorted ascending.
struct TopBottom {
    std::vector<std::size_t> top;
    std::vector<std::size_t> bottom;
};

inline std::size_t beta_count(std::size_t d, double beta) {
    if (!(beta > 0.0 && beta < 100.0)) throw Error("beta must be a percentage in (0, 100)");
    const std::size_t n = fraction_count(beta / 100.0, d);
    if (n == 0)
        throw Error("beta = " + format_number(beta) + "% of " + std::to_string(d) + " dimensions selects no dimension");
    return n;
}

inline TopBottom top_bottom_sets(const RankedFeatures& rf, double beta = kDefaultBeta) {
    const std::size_t n = beta_count(rf.dim(), beta);
    TopBottom tb;
    tb.top.assign(rf.order.begin(), rf.order.begin() + static_cast<std::ptrdiff_t>(n));
    tb.bottom.assign(rf.order.end() - static_cast<std::ptrdiff_t>(n), rf.order.end());
    std::sort(tb.top.begin(), tb.top.end());
    std::sort(tb.bottom.begin(), tb.bottom.end());
    return tb;
}

/// |top_a intersect bottom_b| / d_beta. Inputs need not be sorted.
inline double overlap_ratio(std::vector<std::size_t> top_a, std::vector<std::size_t> bottom_b) {
    if (top_a.size() != bottom_b.size()) throw Error("overlap_ratio: set sizes differ");
    if (top_a.empty()) throw Error("overlap_ratio: empty sets");
    std::sort(top_a.begin(), top_a.end());
    std::sort(bottom_b.begin(), bottom_b.end());
    std::vector<std::size_t> common;
    std::set_intersection(top_a.begin(), top_a.end(), bottom_b.begin(), bottom_b.end(), std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(top_a.size());
}

/// values(r, c) = overlap of the top set of row source r with the bottom set
/// of column source c.
struct OverlapMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    double beta = kDefaultBeta;
    std::size_t layer = 0;
    MatrixD values;
};

inline OverlapMatrix overlap_matrix(const std::vector<RankedFeatures>& features, double beta = kDefaultBeta) {
    if (features.empty()) throw Error("overlap_matrix: no features");
    const std::size_t d = features.front().dim();
    const std::size_t layer = features.front().layer;
    std::vector<TopBottom> sets;
    for (const auto& f : features) {
        if (f.dim() != d) throw Error("overlap_matrix: '" + f.label + "' has a different dimension");
        if (f.layer != layer) throw Error("overlap_matrix: '" + f.label + "' is from a different layer");
        sets.push_back(top_bottom_sets(f, beta));
    }
    OverlapMatrix m{.row_labels = {}, .col_labels = {}, .beta = beta, .layer = layer, .values = MatrixD(features.size(), features.size())};
    for (const auto& f : features) {
        m.row_labels.push_back(f.label);
        m.col_labels.push_back(f.label);
    }
    for (std::size_t r = 0; r < features.size(); ++r)
        for (std::size_t c = 0; c < features.size(); ++c) m.values(r, c) = overlap_ratio(sets[r].top, sets[c].bottom);
    return m;
}

enum class SourceKind { mono, trans };

/// Quadrant means for one layer. A quadrant with no entries (for example
/// no monolingual sources at all) is empty.
struct QuadrantRow {
    std::size_t layer = 0;
    std::optional<double> mono_mono;
    std::optional<double> mono_trans;
    std::optional<double> trans_mono;
    std::optional<double> trans_trans;
};

inline QuadrantRow quadrant_averages(const OverlapMatrix& m, const std::map<std::string, SourceKind>& kind_of) {
    auto kind = [&](const std::string& label) {
        auto it = kind_of.find(label);
        if (it == kind_of.end()) throw Error("quadrant_averages: label '" + label + "' is not classified");
        return it->second;
    };
    double sum[2][2] = {{0, 0}, {0, 0}};
    std::size_t count[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t r = 0; r < m.row_labels.size(); ++r) {
        const int kr = kind(m.row_labels[r]) == SourceKind::trans;
        for (std::size_t c = 0; c < m.col_labels.size(); ++c) {
            const int kc = kind(m.col_labels[c]) == SourceKind::trans;
            sum[kr][kc] += m.values(r, c);
            ++count[kr][kc];
        }
    }
    auto mean = [&](int a, int b) -> std::optional<double> {
        if (count[a][b] == 0) return std::nullopt;
        return sum[a][b] / static_cast<double>(count[a][b]);
    };
    return {m.layer, mean(0, 0), mean(0, 1), mean(1, 0), mean(1, 1)};
}

/// Percentage of a's top-k dimensions absent from b's top-k.
inline double unique_dim_ratio(const RankedFeatures& a, const RankedFeatures& b, std::size_t k) {
    if (a.dim() != b.dim()) throw Error("unique_dim_ratio: dimension mismatch");
    if (k == 0 || k > a.dim()) throw Error("unique_dim_ratio: k outside [1, d]");
    std::vector<std::size_t> ta(a.order.begin(), a.order.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<std::size_t> tb(b.order.begin(), b.order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(ta.begin(), ta.end());
    std::sort(tb.begin(), tb.end());
    std::vector<std::size_t> diff;
    std::set_difference(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(diff));
    return 100.0 * static_cast<double>(diff.size()) / static_cast<double>(k);
}

// Reports.

inline std::string overlap_csv(const OverlapMatrix& m) {
    CsvWriter csv;
    csv.text("top\\bottom");
    for (const auto& l : m.col_labels) csv.text(l);
    csv.end_row();
    for (std::size_t r = 0; r < m.row_labels.size(); ++r) {
        csv.text(m.row_labels[r]);
        for (std::size_t c = 0; c < m.col_labels.size(); ++c) csv.number(m.values(r, c));
        csv.end_row();
    }
    return csv.str();
}

inline std::string quadrant_csv(const std::vector<QuadrantRow>& rows) {
    CsvWriter csv;
    csv.text("layer").text("mono_mono").text("mono_trans").text("trans_mono").text("trans_trans").end_row();
    for (const auto& q : rows) {
        csv.integer(static_cast<long long>(q.layer));
        for (const auto& v : {q.mono_mono, q.mono_trans, q.trans_mono, q.trans_trans}) {
            if (v)
                csv.number(*v);
            else
                csv.empty();
        }
        csv.end_row();
    }
    return csv.str();
}

inline std::string topk_csv(const std::vector<RankedFeatures>& features, std::size_t k) {
    CsvWriter csv;
    csv.text("label").text("layer").text("rank").text("dim").text("norm").end_row();
    for (const auto& f : features) {
        const auto top = topk_report(f, std::min(k, f.dim()));
        for (std::size_t i = 0; i < top.size(); ++i) {
            csv.text(f.label).integer(static_cast<long long>(f.layer)).integer(static_cast<long long>(i + 1));
            csv.integer(static_cast<long long>(top[i].dim)).number(top[i].norm).end_row();
        }
    }
    return csv.str();
}

inline std::string unique_dims_csv(const std::vector<RankedFeatures>& features, const std::vector<std::size_t>& ks) {
    CsvWriter csv;
    csv.text("label_a").text("label_b").text("layer").text("k").text("unique_percent").end_row();
    for (std::size_t k : ks) {
        if (k == 0 || features.empty() || k > features.front().dim()) continue;
        for (const auto& a : features)
            for (const auto& b : features) {
                if (&a == &b) continue;
                csv.text(a.label).text(b.label).integer(static_cast<long long>(a.layer)).integer(static_cast<long long>(k));
                csv.number(unique_dim_ratio(a, b, k)).end_row();
            }
    }
    return csv.str();
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/// Heatmap with a white-to-blue linear ramp over [0, 1] and the value
/// printed in each cell.
inline std::string overlap_svg(const OverlapMatrix& m) {
    constexpr int cell = 48, margin = 96;
    const int n_rows = static_cast<int>(m.row_labels.size());
    const int n_cols = static_cast<int>(m.col_labels.size());
    const int width = margin + n_cols * cell + 16;
    const int height = margin + n_rows * cell + 16;
    std::string svg;
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                  "font-size=\"11\">\n",
                  width, height);
    svg += buf;
    std::snprintf(buf, sizeof(buf), "<text x=\"4\" y=\"14\">layer %zu, beta %s%% (rows: top, columns: bottom)</text>\n",
                  m.layer, format_number(m.beta).c_str());
    svg += buf;
    for (int c = 0; c < n_cols; ++c) {
        std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                      margin + c * cell + cell / 2, margin - 8, detail::xml_escape(m.col_labels[c]).c_str());
        svg += buf;
    }
    for (int r = 0; r < n_rows; ++r) {
        std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">%s</text>\n", margin - 6,
                      margin + r * cell + cell / 2 + 4, detail::xml_escape(m.row_labels[r]).c_str());
        svg += buf;
        for (int c = 0; c < n_cols; ++c) {
            const double v = std::clamp(m.values(r, c), 0.0, 1.0);
            const int red = static_cast<int>(255 - v * (255 - 8));
            const int green = static_cast<int>(255 - v * (255 - 48));
            const int blue = static_cast<int>(255 - v * (255 - 107));
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\" stroke=\"#888\"/>\n"
                          "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" fill=\"%s\">%.2f</text>\n",
                          margin + c * cell, margin + r * cell, cell, cell, red, green, blue, margin + c * cell + cell / 2,
                          margin + r * cell + cell / 2 + 4, v > 0.5 ? "white" : "black", m.values(r, c));
            svg += buf;
        }
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace nlprune
