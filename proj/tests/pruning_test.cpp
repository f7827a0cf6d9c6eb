// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nlprune/pruning.hpp"
#include "nlprune/weights_io.hpp"
#include "support/oracles.hpp"

using namespace nlprune;

namespace {

ModelConfig tiny(std::size_t d = 2, std::size_t d_ff = 2) {
    return {.n_layers = 1, .d_model = d, .n_heads = 1, .d_ff = d_ff, .vocab_size = 257, .max_seq_len = 16,
            .eos_token_id = 256};
}

/// Stats whose norms for every prunable layer are exactly `norms` (or the
/// first d_in entries of it).
ActivationStats stats_with_norms(const WeightStore& w, const std::vector<double>& norms) {
    ActivationStats s;
    for (const auto& name : linear_layer_names(w.config())) {
        const std::vector<double> row(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(w.at(name).cols()));
        s.accumulate<double>(name, row);
    }
    return s;
}

ActivationStats random_stats(const WeightStore& w, std::mt19937_64& rng, std::size_t tokens) {
    ActivationStats s;
    for (const auto& name : linear_layer_names(w.config()))
        for (std::size_t t = 0; t < tokens; ++t) {
            const auto row = oracle::random_vector(rng, w.at(name).cols(), -3.0, 3.0);
            s.accumulate<double>(name, row);
        }
    return s;
}

ScoreMatrix single(const std::string& name, std::vector<std::vector<double>> rows) {
    MatrixD m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    ScoreMatrix s;
    s.insert(name, std::move(m));
    return s;
}

}  // namespace

TEST(Wanda, HandExample) {
    auto w = random_weights(tiny(), 1);
    w.at("block.0.attn.q")(0, 0) = 1.0f;
    w.at("block.0.attn.q")(0, 1) = -2.0f;
    const auto s = wanda_scores(w, stats_with_norms(w, {3.0, 1.0}));
    EXPECT_DOUBLE_EQ(s.at("block.0.attn.q")(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(s.at("block.0.attn.q")(0, 1), 2.0);
}

TEST(Wanda, UnitNormsGiveAbsoluteWeights) {
    const auto w = random_weights(tiny(4, 8), 2);
    const auto s = wanda_scores(w, stats_with_norms(w, std::vector<double>(8, 1.0)));
    for (const auto& name : s.names())
        for (std::size_t i = 0; i < s.at(name).size(); ++i)
            EXPECT_EQ(s.at(name).data()[i], std::fabs(static_cast<double>(w.at(name).data()[i])));
}

TEST(Wanda, MatchesDoubleLoopOracle) {
    std::mt19937_64 rng(3);
    const auto w = random_weights(tiny(8, 8), 3);
    const auto stats = random_stats(w, rng, 5);
    const auto s = wanda_scores(w, stats);
    for (const auto& name : s.names()) {
        const auto W = oracle::weight(w, name);
        const auto& acc = stats.at(name);
        for (std::size_t i = 0; i < W.size(); ++i)
            for (std::size_t j = 0; j < W[i].size(); ++j) {
                const double expect = std::fabs(W[i][j]) * std::sqrt(acc.sq_sums[j]);
                EXPECT_LT(oracle::rel_err(s.at(name)(i, j), expect), 1e-6);
            }
    }
}

TEST(Wanda, MissingOrEmptyStatsAreErrors) {
    const auto w = random_weights(tiny(), 4);
    EXPECT_THROW(wanda_scores(w, ActivationStats{}), Error);
    auto s = stats_with_norms(w, {1.0, 1.0});
    s.layers["block.0.mlp.down"].token_count = 0;
    EXPECT_THROW(wanda_scores(w, s), Error);
}

TEST(RatioScores, HandExample) {
    auto w = random_weights(tiny(), 5);
    w.at("block.0.attn.q")(0, 0) = 1.0f;
    const auto s = ratio_scores(w, stats_with_norms(w, {2.0, 1.0}), stats_with_norms(w, {4.0, 1.0}));
    EXPECT_DOUBLE_EQ(s.at("block.0.attn.q")(0, 0), 1.0);
}

TEST(RatioScores, IdenticalStatsCollapseToWanda) {
    std::mt19937_64 rng(6);
    const auto w = random_weights(tiny(8, 16), 6);
    const auto stats = random_stats(w, rng, 7);
    EXPECT_EQ(ratio_scores(w, stats, stats), wanda_scores(w, stats));
}

TEST(RatioScores, ZeroCounterNormIsClampedToEps) {
    const auto w = random_weights(tiny(), 7);
    const auto s = ratio_scores(w, stats_with_norms(w, {2.0, 1.0}), stats_with_norms(w, {0.0, 1.0}));
    for (const auto& name : s.names()) {
        const double v = s.at(name)(0, 0);
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_NEAR(v, std::fabs(w.at(name)(0, 0)) * 2.0 * 2.0 / kDefaultRatioEps, 1e-6 * v);
    }
    EXPECT_THROW(ratio_scores(w, stats_with_norms(w, {2.0, 1.0}), stats_with_norms(w, {0.0, 1.0}), 0.0), Error);
    EXPECT_THROW(ratio_scores(w, stats_with_norms(w, {2.0, 1.0}), stats_with_norms(w, {1.0, 1.0}), -1.0), Error);
}

TEST(BuildMask, PrunesLowestScore) {
    const auto m = build_mask(single("l", {{3, 2, 5}}), 1.0 / 3.0);
    const auto& k = m.keep.at("l");
    EXPECT_EQ(k(0, 0), 1);
    EXPECT_EQ(k(0, 1), 0);
    EXPECT_EQ(k(0, 2), 1);
}

TEST(BuildMask, TiesGoToLowerIndex) {
    const auto m = build_mask(single("l", {{1, 1, 2}}), 1.0 / 3.0);
    const auto& k = m.keep.at("l");
    EXPECT_EQ(k(0, 0), 0);
    EXPECT_EQ(k(0, 1), 1);
    EXPECT_EQ(k(0, 2), 1);
}

TEST(BuildMask, BoundaryRatios) {
    const auto s = single("l", {{1, 2, 3}, {4, 5, 6}});
    const auto none = build_mask(s, 0.0);
    const auto all = build_mask(s, 1.0);
    for (auto v : none.keep.at("l").data()) EXPECT_EQ(v, 1);
    for (auto v : all.keep.at("l").data()) EXPECT_EQ(v, 0);
    EXPECT_THROW(build_mask(s, 1.5), Error);
    EXPECT_THROW(build_mask(s, -0.1), Error);
    EXPECT_THROW(build_mask(s, 0.3, {{"nope", 0.1}}), Error);
}

TEST(BuildMask, PerRowCountsAndOverrides) {
    std::mt19937_64 rng(8);
    const auto w = random_weights(tiny(8, 20), 8);
    const auto scores = wanda_scores(w, random_stats(w, rng, 3));
    const auto mask = build_mask(scores, 0.3, {{"block.0.mlp.down", 0.5}});
    for (const auto& name : scores.names()) {
        const auto& k = mask.keep.at(name);
        const double a = name == "block.0.mlp.down" ? 0.5 : 0.3;
        for (std::size_t i = 0; i < k.rows(); ++i) {
            const auto row = k.row(i);
            EXPECT_EQ(static_cast<std::size_t>(std::count(row.begin(), row.end(), 0)),
                      static_cast<std::size_t>(std::floor(a * static_cast<double>(k.cols()) + 1e-9)));
        }
    }
}

TEST(ApplyMask, IdentityAndIdempotence) {
    std::mt19937_64 rng(9);
    const auto w = random_weights(tiny(8, 16), 9);
    const auto scores = wanda_scores(w, random_stats(w, rng, 3));
    const auto all_true = build_mask(scores, 0.0);
    EXPECT_EQ(serialize_weights(apply_mask(w, all_true)), serialize_weights(w));
    const auto mask = build_mask(scores, 0.3);
    const auto once = apply_mask(w, mask);
    EXPECT_EQ(serialize_weights(apply_mask(once, mask)), serialize_weights(once));
}

TEST(ApplyMask, GlobalZeroFractionMatchesCount) {
    std::mt19937_64 rng(10);
    const auto w = random_weights(tiny(16, 40), 10);
    const auto pruned = apply_mask(w, build_mask(wanda_scores(w, random_stats(w, rng, 2)), 0.3));
    std::size_t zeros = 0, total = 0, expect = 0;
    for (const auto& name : linear_layer_names(w.config())) {
        const auto& m = pruned.at(name);
        total += m.size();
        zeros += static_cast<std::size_t>(std::count(m.data().begin(), m.data().end(), 0.0f));
        expect += m.rows() * static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(m.cols()) + 1e-9));
    }
    EXPECT_EQ(zeros, expect);
    EXPECT_GT(total, zeros);
}

TEST(ApplyMask, MaskedForwardEqualsZeroedForward) {
    std::mt19937_64 rng(11);
    const ModelConfig cfg{.n_layers = 2, .d_model = 16, .n_heads = 4, .d_ff = 32, .vocab_size = 257,
                          .max_seq_len = 32, .eos_token_id = 256};
    const auto w = random_weights(cfg, 11);
    const auto mask = build_mask(wanda_scores(w, random_stats(w, rng, 4)), 0.3);
    const auto pruned = apply_mask(w, mask);
    auto zeroed = w;
    for (const auto& name : mask.keep.names())
        for (std::size_t i = 0; i < zeroed.at(name).rows(); ++i)
            for (std::size_t j = 0; j < zeroed.at(name).cols(); ++j)
                if (!mask.keep.at(name)(i, j)) zeroed.at(name)(i, j) = 0.0f;
    const TokenSeq t = {72, 105, 33, 10, 256, 5};
    EXPECT_EQ(forward_with_capture(pruned, t).logits, forward_with_capture(zeroed, t).logits);
}

TEST(ApplyMask, RejectsForeignLayersAndShapes) {
    const auto w = random_weights(tiny(), 12);
    PruneMask m;
    m.keep.insert("embed", Matrix<std::uint8_t>(257, 2, 1));
    EXPECT_THROW(apply_mask(w, m), Error);
    PruneMask bad;
    bad.keep.insert("block.0.attn.q", Matrix<std::uint8_t>(3, 2, 1));
    EXPECT_THROW(apply_mask(w, bad), Error);
}

TEST(MaskIo, RoundTrip) {
    std::mt19937_64 rng(13);
    const auto w = random_weights(tiny(8, 13), 13);
    const auto mask = build_mask(wanda_scores(w, random_stats(w, rng, 2)), 0.3, {{"block.0.attn.v", 0.75}}, "seed 13");
    const auto back = deserialize_mask(serialize_mask(mask));
    EXPECT_EQ(back, mask);
    EXPECT_EQ(serialize_mask(back), serialize_mask(mask));
    EXPECT_THROW(deserialize_mask("NLW1........"), Error);
}

TEST(Sparsity, CsvListsEveryLayer) {
    const auto mask = build_mask(single("l", {{1, 2, 3, 4}, {4, 3, 2, 1}}), 0.5);
    const auto s = sparsity_summary(mask);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].pruned, 4u);
    const auto rows = parse_csv(sparsity_csv(mask));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1][0], "l");
    EXPECT_EQ(rows[1][5], "0.5");
}
