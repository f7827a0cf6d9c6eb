// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlprune/activation_stats.hpp"
#include "nlprune/io.hpp"
#include "nlprune/model.hpp"

namespace nlprune {

/// Matrices keyed by layer name, iterated in insertion order.
template <typename T>
class NamedMatrices {
public:
    void insert(std::string name, Matrix<T> m) {
        if (!layers_.count(name)) order_.push_back(name);
        layers_[std::move(name)] = std::move(m);
    }
    bool contains(const std::string& name) const { return layers_.count(name) != 0; }
    const Matrix<T>& at(const std::string& name) const {
        auto it = layers_.find(name);
        if (it == layers_.end()) throw Error("no layer '" + name + "'");
        return it->second;
    }
    const std::vector<std::string>& names() const noexcept { return order_; }
    std::size_t size() const noexcept { return order_.size(); }

    friend bool operator==(const NamedMatrices&, const NamedMatrices&) = default;

private:
    std::map<std::string, Matrix<T>> layers_;
    std::vector<std::string> order_;
};

using ScoreMatrix = NamedMatrices<double>;

inline constexpr double kDefaultAlpha = 0.3;
inline constexpr double kDefaultRatioEps = 1e-8;

namespace detail {

inline const FeatureAccumulator& stats_for(const ActivationStats& stats, const std::string& layer, std::size_t d_in,
                                           std::string_view which) {
    auto it = stats.layers.find(layer);
    if (it == stats.layers.end())
        throw Error(std::string(which) + " activation stats missing prunable layer '" + layer + "'");
    if (it->second.token_count == 0) throw Error(std::string(which) + " activation stats for '" + layer + "' saw no tokens");
    if (it->second.sq_sums.size() != d_in)
        throw Error(std::string(which) + " activation stats for '" + layer + "' have width " +
                    std::to_string(it->second.sq_sums.size()) + ", layer input is " + std::to_string(d_in));
    return it->second;
}

}  // namespace detail

/// S_ij = |W_ij| * ||X_j||_2 over every prunable layer.
inline ScoreMatrix wanda_scores(const WeightStore& w, const ActivationStats& stats) {
    ScoreMatrix out;
    for (const auto& name : linear_layer_names(w.config())) {
        const MatrixF& weight = w.at(name);
        const auto norms = detail::stats_for(stats, name, weight.cols(), "calibration").norms();
        MatrixD s(weight.rows(), weight.cols());
        for (std::size_t i = 0; i < weight.rows(); ++i)
            for (std::size_t j = 0; j < weight.cols(); ++j)
                s(i, j) = std::fabs(static_cast<double>(weight(i, j))) * norms[j];
        out.insert(name, std::move(s));
    }
    return out;
}

/// S_ij = |W_ij| * ||X_j|| * (||X_j|| / max(||Z_j||, eps)), with the ratio
/// evaluated first.
inline ScoreMatrix ratio_scores(const WeightStore& w, const ActivationStats& stats_x, const ActivationStats& stats_z,
                                double eps = kDefaultRatioEps) {
    if (!(eps >= 0.0)) throw Error("ratio_scores: eps must be non-negative");
    ScoreMatrix out;
    for (const auto& name : linear_layer_names(w.config())) {
        const MatrixF& weight = w.at(name);
        const auto nx = detail::stats_for(stats_x, name, weight.cols(), "calibration").norms();
        const auto nz = detail::stats_for(stats_z, name, weight.cols(), "counter-calibration").norms();
        std::vector<double> factor(nx.size());
        for (std::size_t j = 0; j < nx.size(); ++j) {
            const double denom = std::max(nz[j], eps);
            if (denom == 0.0) throw Error("ratio_scores: zero counter-calibration norm in '" + name + "' with eps = 0");
            factor[j] = nx[j] * (nx[j] / denom);
        }
        MatrixD s(weight.rows(), weight.cols());
        for (std::size_t i = 0; i < weight.rows(); ++i)
            for (std::size_t j = 0; j < weight.cols(); ++j)
                s(i, j) = std::fabs(static_cast<double>(weight(i, j))) * factor[j];
        out.insert(name, std::move(s));
    }
    return out;
}

/// Keep-masks (1 = keep) per layer plus the ratio that produced them.
struct PruneMask {
    NamedMatrices<std::uint8_t> keep;
    double alpha = kDefaultAlpha;
    std::map<std::string, double> layer_alpha;  // per-layer overrides
    std::string provenance;

    double alpha_for(const std::string& layer) const {
        auto it = layer_alpha.find(layer);
        return it == layer_alpha.end() ? alpha : it->second;
    }

    friend bool operator==(const PruneMask&, const PruneMask&) = default;
};

inline void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("pruning ratio alpha must be in [0, 1], got " + format_number(alpha));
}

/// Prunes, in every output row, the floor(alpha * d_in) lowest scores.
/// Ties go to the lower column index first.
inline PruneMask build_mask(const ScoreMatrix& scores, double alpha = kDefaultAlpha,
                            const std::map<std::string, double>& layer_alpha = {}, std::string provenance = {}) {
    check_alpha(alpha);
    for (const auto& [name, a] : layer_alpha) {
        check_alpha(a);
        if (!scores.contains(name)) throw Error("alpha override for unknown layer '" + name + "'");
    }
    PruneMask mask{.keep = {}, .alpha = alpha, .layer_alpha = layer_alpha, .provenance = std::move(provenance)};
    for (const auto& name : scores.names()) {
        const MatrixD& s = scores.at(name);
        for (double v : s.data())
            if (!std::isfinite(v)) throw Error("build_mask: non-finite score in '" + name + "'");
        const std::size_t n_prune = fraction_count(mask.alpha_for(name), s.cols());
        Matrix<std::uint8_t> keep(s.rows(), s.cols(), 1);
        std::vector<std::size_t> cols(s.cols());
        for (std::size_t i = 0; i < s.rows(); ++i) {
            const auto row = s.row(i);
            std::iota(cols.begin(), cols.end(), std::size_t{0});
            std::stable_sort(cols.begin(), cols.end(), [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
            for (std::size_t k = 0; k < n_prune; ++k) keep(i, cols[k]) = 0;
        }
        mask.keep.insert(name, std::move(keep));
    }
    return mask;
}

/// Copy of `w` with masked entries set to 0.0f. Non-prunable matrices are
/// copied unchanged.
inline WeightStore apply_mask(const WeightStore& w, const PruneMask& mask) {
    WeightStore out = w;
    const auto prunable = linear_layer_names(w.config());
    for (const auto& name : mask.keep.names()) {
        if (std::find(prunable.begin(), prunable.end(), name) == prunable.end())
            throw Error("mask layer '" + name + "' is not a prunable layer of this model");
        const auto& keep = mask.keep.at(name);
        MatrixF& m = out.at(name);
        if (keep.rows() != m.rows() || keep.cols() != m.cols())
            throw Error("mask shape for '" + name + "' does not match weight shape");
        auto dst = m.data();
        auto k = keep.data();
        for (std::size_t i = 0; i < dst.size(); ++i)
            if (!k[i]) dst[i] = 0.0f;
    }
    return out;
}

struct LayerSparsity {
    std::string layer;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t pruned = 0;
    double alpha = 0.0;
};

inline std::vector<LayerSparsity> sparsity_summary(const PruneMask& mask) {
    std::vector<LayerSparsity> out;
    for (const auto& name : mask.keep.names()) {
        const auto& k = mask.keep.at(name);
        const auto kept = static_cast<std::size_t>(std::count(k.data().begin(), k.data().end(), std::uint8_t{1}));
        out.push_back({name, k.rows(), k.cols(), k.size() - kept, mask.alpha_for(name)});
    }
    return out;
}

inline std::string sparsity_csv(const PruneMask& mask) {
    CsvWriter csv;
    csv.text("layer").text("rows").text("cols").text("alpha").text("pruned").text("sparsity").end_row();
    for (const auto& s : sparsity_summary(mask)) {
        csv.text(s.layer).integer(static_cast<long long>(s.rows)).integer(static_cast<long long>(s.cols)).number(s.alpha);
        csv.integer(static_cast<long long>(s.pruned)).number(static_cast<double>(s.pruned) / static_cast<double>(s.rows * s.cols));
        csv.end_row();
    }
    return csv.str();
}

// Mask file: "NLM1" | u64 LE header length | JSON {alpha, provenance,
// layers: [{name, rows, cols, alpha, offset}]} | bit-packed keep masks.
// Bits are row-major, least significant bit first; each layer starts on a
// byte boundary at `offset` relative to the payload start.

inline constexpr std::string_view kMaskMagic = "NLM1";

inline std::string serialize_mask(const PruneMask& mask) {
    nlohmann::json header;
    header["alpha"] = mask.alpha;
    header["provenance"] = mask.provenance;
    header["layers"] = nlohmann::json::array();
    std::string payload;
    for (const auto& name : mask.keep.names()) {
        const auto& k = mask.keep.at(name);
        header["layers"].push_back({{"name", name},
                                    {"rows", k.rows()},
                                    {"cols", k.cols()},
                                    {"alpha", mask.alpha_for(name)},
                                    {"offset", payload.size()}});
        std::string bits((k.size() + 7) / 8, '\0');
        auto data = k.data();
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data[i]) bits[i / 8] = static_cast<char>(static_cast<unsigned char>(bits[i / 8]) | (1u << (i % 8)));
        payload += bits;
    }
    const std::string h = header.dump();
    std::string out(kMaskMagic);
    append_le<std::uint64_t>(out, h.size());
    out += h;
    out += payload;
    return out;
}

inline PruneMask deserialize_mask(std::string_view bytes) {
    if (bytes.size() < 12 || bytes.substr(0, 4) != kMaskMagic) throw Error("mask: bad magic, expected NLM1");
    const auto hlen = read_le<std::uint64_t>(bytes, 4);
    if (hlen > bytes.size() - 12) throw Error("mask: header length exceeds file size");
    PruneMask mask;
    try {
        const auto header = nlohmann::json::parse(bytes.substr(12, hlen));
        mask.alpha = header.at("alpha").get<double>();
        mask.provenance = header.at("provenance").get<std::string>();
        const std::string_view payload = bytes.substr(12 + hlen);
        for (const auto& l : header.at("layers")) {
            const auto name = l.at("name").get<std::string>();
            const auto rows = l.at("rows").get<std::size_t>();
            const auto cols = l.at("cols").get<std::size_t>();
            const auto offset = l.at("offset").get<std::size_t>();
            const double a = l.at("alpha").get<double>();
            if (a != mask.alpha) mask.layer_alpha[name] = a;
            const std::size_t nbytes = (rows * cols + 7) / 8;
            if (offset > payload.size() || nbytes > payload.size() - offset)
                throw Error("mask: bits of '" + name + "' run past end of file");
            Matrix<std::uint8_t> k(rows, cols);
            auto data = k.data();
            for (std::size_t i = 0; i < data.size(); ++i)
                data[i] = (static_cast<unsigned char>(payload[offset + i / 8]) >> (i % 8)) & 1u;
            mask.keep.insert(name, std::move(k));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("mask: malformed header: ") + e.what());
    }
    check_alpha(mask.alpha);
    return mask;
}

inline void save_mask(const PruneMask& mask, const std::filesystem::path& path) { write_file(path, serialize_mask(mask)); }
inline PruneMask load_mask(const std::filesystem::path& path) { return deserialize_mask(read_file(path)); }

}  // namespace nlprune
