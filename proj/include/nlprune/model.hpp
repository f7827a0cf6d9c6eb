// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal pre-norm decoder-only transformer with learned absolute position
// embeddings. Weights are float; activations are computed in double.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlprune/activation_stats.hpp"
#include "nlprune/common.hpp"

namespace nlprune {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

struct ModelConfig {
    std::size_t n_layers = 2;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t d_ff = 64;
    std::size_t vocab_size = 257;
    std::size_t max_seq_len = 512;
    TokenId eos_token_id = 256;

    std::size_t head_dim() const noexcept { return d_model / n_heads; }

    void validate() const {
        if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 || vocab_size == 0 || max_seq_len == 0)
            throw Error("model config: all sizes must be positive");
        if (d_model % n_heads != 0) throw Error("model config: n_heads must divide d_model");
        if (eos_token_id >= vocab_size) throw Error("model config: eos_token_id out of vocabulary");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Canonical matrix names.

inline constexpr std::array<std::string_view, 6> kLinearKinds = {"attn.q", "attn.k", "attn.v", "attn.o", "mlp.up", "mlp.down"};

inline std::string block_name(std::size_t block, std::string_view kind) {
    return "block." + std::to_string(block) + "." + std::string(kind);
}

/// Residual-stream capture key for a block's output.
inline std::string residual_name(std::size_t block) { return block_name(block, "out"); }

/// Attention and MLP linear matrices, in manifest order. These are the
/// prunable layers; embeddings, position table, norms and lm_head are not.
inline std::vector<std::string> linear_layer_names(const ModelConfig& cfg) {
    std::vector<std::string> names;
    for (std::size_t b = 0; b < cfg.n_layers; ++b)
        for (auto kind : kLinearKinds) names.push_back(block_name(b, kind));
    return names;
}

/// Every matrix a store must hold, in manifest order, with its shape.
inline std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> expected_layout(const ModelConfig& cfg) {
    const auto d = cfg.d_model;
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> out;
    out.push_back({"embed", {cfg.vocab_size, d}});
    out.push_back({"pos_embed", {cfg.max_seq_len, d}});
    for (std::size_t b = 0; b < cfg.n_layers; ++b) {
        out.push_back({block_name(b, "ln1.g"), {1, d}});
        out.push_back({block_name(b, "ln1.b"), {1, d}});
        out.push_back({block_name(b, "attn.q"), {d, d}});
        out.push_back({block_name(b, "attn.k"), {d, d}});
        out.push_back({block_name(b, "attn.v"), {d, d}});
        out.push_back({block_name(b, "attn.o"), {d, d}});
        out.push_back({block_name(b, "ln2.g"), {1, d}});
        out.push_back({block_name(b, "ln2.b"), {1, d}});
        out.push_back({block_name(b, "mlp.up"), {cfg.d_ff, d}});
        out.push_back({block_name(b, "mlp.down"), {d, cfg.d_ff}});
    }
    out.push_back({"ln_f.g", {1, d}});
    out.push_back({"ln_f.b", {1, d}});
    out.push_back({"lm_head", {cfg.vocab_size, d}});
    return out;
}

/// Model parameters. Matrices are d_out x d_in; order is the manifest order.
class WeightStore {
public:
    WeightStore() = default;
    explicit WeightStore(ModelConfig cfg) : config_(cfg) {}

    const ModelConfig& config() const noexcept { return config_; }

    bool contains(std::string_view name) const { return matrices_.count(std::string(name)) != 0; }

    const MatrixF& at(std::string_view name) const {
        auto it = matrices_.find(std::string(name));
        if (it == matrices_.end()) throw Error("weight store has no matrix '" + std::string(name) + "'");
        return it->second;
    }
    MatrixF& at(std::string_view name) {
        auto it = matrices_.find(std::string(name));
        if (it == matrices_.end()) throw Error("weight store has no matrix '" + std::string(name) + "'");
        return it->second;
    }

    void insert(std::string name, MatrixF m) {
        if (!matrices_.count(name)) order_.push_back(name);
        matrices_[std::move(name)] = std::move(m);
    }

    const std::vector<std::string>& names() const noexcept { return order_; }
    std::size_t size() const noexcept { return order_.size(); }

    /// Checks the structural invariants: every canonical matrix present with
    /// the configured shape, no extras, all values finite.
    void validate() const {
        config_.validate();
        const auto layout = expected_layout(config_);
        for (const auto& [name, shape] : layout) {
            auto it = matrices_.find(name);
            if (it == matrices_.end()) throw Error("missing matrix '" + name + "'");
            if (it->second.rows() != shape.first || it->second.cols() != shape.second)
                throw Error("matrix '" + name + "' has shape " + std::to_string(it->second.rows()) + "x" +
                            std::to_string(it->second.cols()) + ", expected " + std::to_string(shape.first) + "x" +
                            std::to_string(shape.second));
            for (float v : it->second.data())
                if (!std::isfinite(v)) throw Error("matrix '" + name + "' contains a non-finite value");
        }
        if (matrices_.size() != layout.size()) {
            for (const auto& name : order_) {
                const bool known = std::any_of(layout.begin(), layout.end(), [&](const auto& e) { return e.first == name; });
                if (!known) throw Error("unexpected matrix '" + name + "'");
            }
        }
    }

    friend bool operator==(const WeightStore&, const WeightStore&) = default;

private:
    ModelConfig config_;
    std::map<std::string, MatrixF> matrices_;
    std::vector<std::string> order_;
};

namespace detail {

inline double normal_draw(Rng& rng) {
    // Box-Muller on the portable unit draw.
    double u1 = uniform_unit(rng);
    while (u1 <= 0.0) u1 = uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Seeded random toy model. Linear weights ~ N(0, 1/d_in).
inline WeightStore random_weights(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    WeightStore w(cfg);
    for (const auto& [name, shape] : expected_layout(cfg)) {
        MatrixF m(shape.first, shape.second);
        double mean = 0.0;
        double sd = 1.0 / std::sqrt(static_cast<double>(shape.second));
        if (name == "embed") {
            sd = 1.0;
        } else if (name == "pos_embed") {
            sd = 0.1;
        } else if (name.ends_with(".g")) {
            mean = 1.0;
            sd = 0.1;
        } else if (name.ends_with(".b")) {
            sd = 0.1;
        }
        for (float& v : m.data()) v = static_cast<float>(mean + sd * detail::normal_draw(rng));
        w.insert(name, std::move(m));
    }
    return w;
}

/// What to accumulate during a forward pass. `linear` holds linear-layer
/// names whose inputs are recorded; `residual_blocks` holds block indices
/// whose outputs are recorded. Only positions in [position_begin,
/// position_end) contribute.
struct CaptureSpec {
    std::set<std::string> linear;
    std::set<std::size_t> residual_blocks;
    std::size_t position_begin = 0;
    std::size_t position_end = static_cast<std::size_t>(-1);

    bool empty() const noexcept { return linear.empty() && residual_blocks.empty(); }

    static CaptureSpec all(const ModelConfig& cfg) {
        CaptureSpec spec;
        for (auto& n : linear_layer_names(cfg)) spec.linear.insert(n);
        for (std::size_t b = 0; b < cfg.n_layers; ++b) spec.residual_blocks.insert(b);
        return spec;
    }
};

struct ForwardResult {
    MatrixD logits;  // T x vocab_size
    ActivationStats stats;
};

namespace detail {

using Rows = std::vector<std::vector<double>>;

inline void layer_norm(const std::vector<double>& x, const MatrixF& g, const MatrixF& b, std::vector<double>& out) {
    const std::size_t d = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    out.resize(d);
    for (std::size_t j = 0; j < d; ++j)
        out[j] = (x[j] - mean) * inv * static_cast<double>(g(0, j)) + static_cast<double>(b(0, j));
}

inline void linear(const MatrixF& w, const std::vector<double>& x, std::vector<double>& out) {
    out.assign(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto row = w.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) acc += static_cast<double>(row[j]) * x[j];
        out[i] = acc;
    }
}

inline double gelu(double x) {
    constexpr double kSqrt2OverPi = 0.7978845608028654;
    return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + 0.044715 * x * x * x)));
}

class Capturer {
public:
    Capturer(const CaptureSpec& spec, ActivationStats& stats) : spec_(spec), stats_(stats) {}

    void linear_input(const std::string& name, std::size_t pos, const std::vector<double>& x) {
        if (in_range(pos) && spec_.linear.count(name)) stats_.accumulate<double>(name, x);
    }
    void residual(std::size_t block, std::size_t pos, const std::vector<double>& x) {
        if (in_range(pos) && spec_.residual_blocks.count(block)) stats_.accumulate<double>(residual_name(block), x);
    }

private:
    bool in_range(std::size_t pos) const { return pos >= spec_.position_begin && pos < spec_.position_end; }
    const CaptureSpec& spec_;
    ActivationStats& stats_;
};

}  // namespace detail

/// Runs the causal decoder over `tokens`, accumulating captured activations
/// into `stats`. Returns logits for every position, or only for the last
/// position when `last_only` is set (the matrix then has one row).
inline MatrixD forward_accumulate(const WeightStore& w, std::span<const TokenId> tokens, const CaptureSpec& capture,
                                  ActivationStats& stats, bool last_only = false) {
    const ModelConfig& cfg = w.config();
    const std::size_t T = tokens.size();
    if (T == 0) throw Error("forward: empty token sequence");
    if (T > cfg.max_seq_len)
        throw Error("forward: sequence length " + std::to_string(T) + " exceeds max_seq_len " +
                    std::to_string(cfg.max_seq_len));
    for (const auto& name : capture.linear)
        if (!w.contains(name) || (name.find(".attn.") == std::string::npos && name.find(".mlp.") == std::string::npos))
            throw Error("forward: unknown capture layer '" + name + "'");
    for (std::size_t b : capture.residual_blocks)
        if (b >= cfg.n_layers) throw Error("forward: capture block " + std::to_string(b) + " out of range");

    const std::size_t d = cfg.d_model;
    const std::size_t H = cfg.n_heads;
    const std::size_t hd = cfg.head_dim();
    const MatrixF& embed = w.at("embed");
    const MatrixF& pos = w.at("pos_embed");

    detail::Rows x(T, std::vector<double>(d));
    for (std::size_t t = 0; t < T; ++t) {
        if (tokens[t] >= cfg.vocab_size) throw Error("forward: token id " + std::to_string(tokens[t]) + " out of vocabulary");
        for (std::size_t j = 0; j < d; ++j)
            x[t][j] = static_cast<double>(embed(tokens[t], j)) + static_cast<double>(pos(t, j));
    }

    detail::Capturer cap(capture, stats);
    std::vector<double> h, tmp;
    detail::Rows q(T), k(T), v(T), attn(T);
    std::vector<double> scores(T);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    for (std::size_t b = 0; b < cfg.n_layers; ++b) {
        const std::string qn = block_name(b, "attn.q"), kn = block_name(b, "attn.k"), vn = block_name(b, "attn.v");
        const std::string on = block_name(b, "attn.o"), un = block_name(b, "mlp.up"), dn = block_name(b, "mlp.down");
        const MatrixF &ln1g = w.at(block_name(b, "ln1.g")), &ln1b = w.at(block_name(b, "ln1.b"));
        const MatrixF &ln2g = w.at(block_name(b, "ln2.g")), &ln2b = w.at(block_name(b, "ln2.b"));

        for (std::size_t t = 0; t < T; ++t) {
            detail::layer_norm(x[t], ln1g, ln1b, h);
            cap.linear_input(qn, t, h);
            cap.linear_input(kn, t, h);
            cap.linear_input(vn, t, h);
            detail::linear(w.at(qn), h, q[t]);
            detail::linear(w.at(kn), h, k[t]);
            detail::linear(w.at(vn), h, v[t]);
        }
        for (std::size_t t = 0; t < T; ++t) {
            attn[t].assign(d, 0.0);
            for (std::size_t head = 0; head < H; ++head) {
                const std::size_t off = head * hd;
                double mx = -INFINITY;
                for (std::size_t s = 0; s <= t; ++s) {
                    double dot = 0.0;
                    for (std::size_t e = 0; e < hd; ++e) dot += q[t][off + e] * k[s][off + e];
                    scores[s] = dot * scale;
                    mx = std::max(mx, scores[s]);
                }
                double denom = 0.0;
                for (std::size_t s = 0; s <= t; ++s) {
                    scores[s] = std::exp(scores[s] - mx);
                    denom += scores[s];
                }
                for (std::size_t s = 0; s <= t; ++s) {
                    const double p = scores[s] / denom;
                    for (std::size_t e = 0; e < hd; ++e) attn[t][off + e] += p * v[s][off + e];
                }
            }
        }
        for (std::size_t t = 0; t < T; ++t) {
            cap.linear_input(on, t, attn[t]);
            detail::linear(w.at(on), attn[t], tmp);
            for (std::size_t j = 0; j < d; ++j) x[t][j] += tmp[j];

            detail::layer_norm(x[t], ln2g, ln2b, h);
            cap.linear_input(un, t, h);
            detail::linear(w.at(un), h, tmp);
            for (double& a : tmp) a = detail::gelu(a);
            cap.linear_input(dn, t, tmp);
            detail::linear(w.at(dn), tmp, h);
            for (std::size_t j = 0; j < d; ++j) x[t][j] += h[j];
            cap.residual(b, t, x[t]);
        }
    }

    const MatrixF& head = w.at("lm_head");
    const std::size_t first = last_only ? T - 1 : 0;
    MatrixD logits(T - first, cfg.vocab_size);
    std::vector<double> out;
    for (std::size_t t = first; t < T; ++t) {
        detail::layer_norm(x[t], w.at("ln_f.g"), w.at("ln_f.b"), h);
        detail::linear(head, h, out);
        std::copy(out.begin(), out.end(), logits.row(t - first).begin());
    }
    return logits;
}

/// Forward pass returning logits and a fresh stats object for `capture`.
inline ForwardResult forward_with_capture(const WeightStore& w, std::span<const TokenId> tokens,
                                          const CaptureSpec& capture = {}) {
    ForwardResult r;
    r.logits = forward_accumulate(w, tokens, capture, r.stats);
    return r;
}

/// Natural-log softmax of one logit row.
inline std::vector<double> log_softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

/// Sum over t >= 1 of log p(tokens[t] | tokens[<t]), without length normalization.
inline double sequence_log_prob(const WeightStore& w, std::span<const TokenId> tokens) {
    if (tokens.size() < 2) throw Error("sequence_log_prob: need at least two tokens");
    ActivationStats unused;
    const MatrixD logits = forward_accumulate(w, tokens, {}, unused);
    double total = 0.0;
    for (std::size_t t = 1; t < tokens.size(); ++t) total += log_softmax(logits.row(t - 1))[tokens[t]];
    return total;
}

/// Sampling parameters; defaults are the translation-experiment settings.
struct GenParams {
    std::size_t max_new_tokens = 64;
    double temperature = 0.8;
    std::size_t top_k = 100;
    double top_p = 0.75;
    std::uint64_t seed = 0;

    void validate() const {
        if (max_new_tokens == 0) throw Error("gen params: max_new_tokens must be positive");
        if (!(temperature > 0.0)) throw Error("gen params: temperature must be positive");
        if (top_k == 0) throw Error("gen params: top_k must be positive");
        if (!(top_p > 0.0 && top_p <= 1.0)) throw Error("gen params: top_p must be in (0, 1]");
    }
};

/// Draws one token: temperature, then top-k, then top-p on the renormalized
/// top-k distribution. Ties in probability keep the lower token id first.
inline TokenId sample_token(std::span<const double> logits, const GenParams& p, Rng& rng) {
    const std::size_t V = logits.size();
    std::vector<double> scaled(V);
    for (std::size_t i = 0; i < V; ++i) scaled[i] = logits[i] / p.temperature;
    const double mx = *std::max_element(scaled.begin(), scaled.end());
    std::vector<double> prob(V);
    for (std::size_t i = 0; i < V; ++i) prob[i] = std::exp(scaled[i] - mx);

    std::vector<TokenId> order(V);
    std::iota(order.begin(), order.end(), TokenId{0});
    std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return prob[a] > prob[b]; });
    order.resize(std::min(p.top_k, V));

    double kept_mass = 0.0;
    for (TokenId id : order) kept_mass += prob[id];
    std::size_t nucleus = 0;
    double cum = 0.0;
    while (nucleus < order.size()) {
        cum += prob[order[nucleus]] / kept_mass;
        ++nucleus;
        if (cum >= p.top_p) break;
    }
    order.resize(nucleus);
    if (order.size() == 1) return order.front();

    double total = 0.0;
    for (TokenId id : order) total += prob[id];
    const double u = uniform_unit(rng) * total;
    double acc = 0.0;
    for (TokenId id : order) {
        acc += prob[id];
        if (u < acc) return id;
    }
    return order.back();
}

/// Autoregressive sampling. Returns only the new tokens; stops after
/// emitting eos, after max_new_tokens, or when the context is full.
inline TokenSeq generate(const WeightStore& w, const TokenSeq& prompt, const GenParams& p) {
    p.validate();
    const ModelConfig& cfg = w.config();
    if (prompt.empty()) throw Error("generate: empty prompt");
    if (prompt.size() > cfg.max_seq_len)
        throw Error("generate: prompt length " + std::to_string(prompt.size()) + " exceeds max_seq_len " +
                    std::to_string(cfg.max_seq_len));
    Rng rng(p.seed);
    TokenSeq seq = prompt;
    TokenSeq out;
    ActivationStats unused;
    while (out.size() < p.max_new_tokens && seq.size() < cfg.max_seq_len) {
        const MatrixD logits = forward_accumulate(w, seq, {}, unused, /*last_only=*/true);
        const TokenId next = sample_token(logits.row(0), p, rng);
        out.push_back(next);
        seq.push_back(next);
        if (next == cfg.eos_token_id) break;
    }
    return out;
}

}  // namespace nlprune
