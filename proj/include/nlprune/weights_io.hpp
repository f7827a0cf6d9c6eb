// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

// Weight container:
//   "NLW1" | u64 LE header length | UTF-8 JSON header | f32 LE payloads
// The header holds the model config and an ordered manifest of
// {name, rows, cols, offset}; offsets are relative to the payload start and
// payloads are row-major in manifest order.

#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "nlprune/io.hpp"
#include "nlprune/model.hpp"

namespace nlprune {

inline constexpr std::string_view kWeightsMagic = "NLW1";

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"n_layers", c.n_layers},     {"d_model", c.d_model},       {"n_heads", c.n_heads},
            {"d_ff", c.d_ff},             {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
            {"eos_token_id", c.eos_token_id}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.eos_token_id = j.at("eos_token_id").get<TokenId>();
    c.validate();
    return c;
}

inline std::string serialize_weights(const WeightStore& w) {
    nlohmann::json header;
    header["config"] = config_to_json(w.config());
    header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& name : w.names()) {
        const MatrixF& m = w.at(name);
        header["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
        offset += m.size() * sizeof(float);
    }
    const std::string h = header.dump();
    std::string out(kWeightsMagic);
    append_le<std::uint64_t>(out, h.size());
    out += h;
    out.reserve(out.size() + offset);
    for (const auto& name : w.names())
        for (float v : w.at(name).data()) append_le<float>(out, v);
    return out;
}

inline WeightStore deserialize_weights(std::string_view bytes) {
    if (bytes.size() < 12 || bytes.substr(0, 4) != kWeightsMagic) throw Error("weights: bad magic, expected NLW1");
    const auto hlen = read_le<std::uint64_t>(bytes, 4);
    if (hlen > bytes.size() - 12) throw Error("weights: header length exceeds file size");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(12, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("weights: malformed header: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg = config_from_json(header.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("weights: malformed config: ") + e.what());
    }
    const std::string_view payload = bytes.substr(12 + hlen);
    WeightStore w(cfg);
    try {
        for (const auto& t : header.at("tensors")) {
            const auto name = t.at("name").get<std::string>();
            const auto rows = t.at("rows").get<std::size_t>();
            const auto cols = t.at("cols").get<std::size_t>();
            const auto offset = t.at("offset").get<std::uint64_t>();
            if (w.contains(name)) throw Error("weights: duplicate matrix '" + name + "'");
            const std::uint64_t nbytes = static_cast<std::uint64_t>(rows) * cols * sizeof(float);
            if (offset > payload.size() || nbytes > payload.size() - offset)
                throw Error("weights: payload of '" + name + "' runs past end of file");
            MatrixF m(rows, cols);
            auto data = m.data();
            for (std::size_t i = 0; i < data.size(); ++i) {
                data[i] = read_le<float>(payload, offset + i * sizeof(float));
                if (!std::isfinite(data[i])) throw Error("weights: non-finite value in '" + name + "'");
            }
            w.insert(name, std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("weights: malformed manifest: ") + e.what());
    }
    w.validate();
    return w;
}

inline WeightStore load_weights(const std::filesystem::path& path) {
    try {
        return deserialize_weights(read_file(path));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

inline void save_weights(const WeightStore& w, const std::filesystem::path& path) {
    write_file(path, serialize_weights(w));
}

}  // namespace nlprune
