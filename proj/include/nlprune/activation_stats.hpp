// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlprune/common.hpp"

namespace nlprune {

/// Running per-feature sum of squares for one captured input. Squared sums
/// are kept in double and only square-rooted when norms are read.
struct FeatureAccumulator {
    std::vector<double> sq_sums;
    std::uint64_t token_count = 0;

    std::vector<double> norms() const {
        std::vector<double> n(sq_sums.size());
        for (std::size_t j = 0; j < n.size(); ++j) n[j] = std::sqrt(sq_sums[j]);
        return n;
    }

    friend bool operator==(const FeatureAccumulator&, const FeatureAccumulator&) = default;
};

/// Per-layer-name activation statistics, keyed by the capture name
/// ("block.0.mlp.up" for a linear input, "block.0.out" for a residual output).
struct ActivationStats {
    std::map<std::string, FeatureAccumulator> layers;

    bool empty() const noexcept { return layers.empty(); }

    const FeatureAccumulator& at(std::string_view name) const {
        auto it = layers.find(std::string(name));
        if (it == layers.end()) throw Error("activation stats missing layer '" + std::string(name) + "'");
        return it->second;
    }

    /// Adds one activation row for `name`, creating the accumulator on first use.
    template <typename T>
    void accumulate(const std::string& name, std::span<const T> row) {
        auto& acc = layers[name];
        if (acc.sq_sums.empty()) acc.sq_sums.assign(row.size(), 0.0);
        if (acc.sq_sums.size() != row.size()) throw Error("activation width changed for '" + name + "'");
        for (std::size_t j = 0; j < row.size(); ++j) {
            const double v = static_cast<double>(row[j]);
            acc.sq_sums[j] += v * v;
        }
        ++acc.token_count;
    }

    friend bool operator==(const ActivationStats&, const ActivationStats&) = default;
};

/// Elementwise sum of two stats objects. An empty operand is the identity;
/// otherwise both must cover the same layers at the same widths.
inline ActivationStats merge_stats(const ActivationStats& a, const ActivationStats& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.layers.size() != b.layers.size()) throw Error("merge_stats: layer sets differ");
    ActivationStats out = a;
    for (auto& [name, acc] : out.layers) {
        auto it = b.layers.find(name);
        if (it == b.layers.end()) throw Error("merge_stats: layer '" + name + "' missing from second operand");
        if (it->second.sq_sums.size() != acc.sq_sums.size())
            throw Error("merge_stats: width mismatch for '" + name + "'");
        for (std::size_t j = 0; j < acc.sq_sums.size(); ++j) acc.sq_sums[j] += it->second.sq_sums[j];
        acc.token_count += it->second.token_count;
    }
    return out;
}

// Stats file: "NLS1", u64 LE header length, JSON header listing
// {name, dim, token_count} in name order, then f64 LE squared sums.

inline constexpr std::string_view kStatsMagic = "NLS1";

inline std::string serialize_stats(const ActivationStats& stats) {
    nlohmann::json header;
    header["layers"] = nlohmann::json::array();
    for (const auto& [name, acc] : stats.layers)
        header["layers"].push_back({{"name", name}, {"dim", acc.sq_sums.size()}, {"token_count", acc.token_count}});
    const std::string h = header.dump();
    std::string out(kStatsMagic);
    append_le<std::uint64_t>(out, h.size());
    out += h;
    for (const auto& [name, acc] : stats.layers)
        for (double v : acc.sq_sums) append_le<double>(out, v);
    return out;
}

inline ActivationStats deserialize_stats(std::string_view bytes) {
    if (bytes.substr(0, 4) != kStatsMagic) throw Error("stats file: bad magic");
    const auto hlen = read_le<std::uint64_t>(bytes, 4);
    if (12 + hlen > bytes.size()) throw Error("stats file: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(12, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("stats file: malformed header: ") + e.what());
    }
    ActivationStats stats;
    std::size_t off = 12 + hlen;
    for (const auto& entry : header.at("layers")) {
        const auto name = entry.at("name").get<std::string>();
        const auto dim = entry.at("dim").get<std::size_t>();
        FeatureAccumulator acc;
        acc.token_count = entry.at("token_count").get<std::uint64_t>();
        acc.sq_sums.resize(dim);
        for (std::size_t j = 0; j < dim; ++j, off += 8) {
            acc.sq_sums[j] = read_le<double>(bytes, off);
            if (!std::isfinite(acc.sq_sums[j]) || acc.sq_sums[j] < 0)
                throw Error("stats file: invalid squared sum in '" + name + "'");
        }
        stats.layers.emplace(name, std::move(acc));
    }
    if (off != bytes.size()) throw Error("stats file: trailing bytes");
    return stats;
}

}  // namespace nlprune
