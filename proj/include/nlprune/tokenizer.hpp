// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nlprune/io.hpp"
#include "nlprune/model.hpp"

namespace nlprune {

/// Literal marker in rendered demonstrations that becomes the eos token.
inline constexpr std::string_view kEosMarker = "[EOS]";

/// Greedy longest-match tokenizer over byte-string pieces. The default
/// vocabulary is the 256 single bytes; the eos id is taken from the model
/// config and never matches text.
class Tokenizer {
public:
    /// Byte-level vocabulary: token i is byte i for i < 256.
    static Tokenizer bytes(const ModelConfig& cfg) {
        if (cfg.vocab_size < 257) throw Error("byte tokenizer needs vocab_size >= 257");
        if (cfg.eos_token_id < 256) throw Error("byte tokenizer: eos_token_id collides with a byte id");
        std::vector<std::string> pieces;
        for (int b = 0; b < 256; ++b) pieces.emplace_back(1, static_cast<char>(b));
        return Tokenizer(std::move(pieces), cfg.eos_token_id);
    }

    /// Vocabulary file: line i is the piece for token id i. Escapes \n, \t,
    /// \\ and \xHH are decoded. The line at the eos id is ignored.
    static Tokenizer from_vocab_file(const std::filesystem::path& path, const ModelConfig& cfg) {
        std::vector<std::string> pieces;
        for (const auto& line : read_lines(path)) pieces.push_back(unescape(line));
        if (pieces.size() > cfg.vocab_size)
            throw Error("vocab file has " + std::to_string(pieces.size()) + " entries, model vocab_size is " +
                        std::to_string(cfg.vocab_size));
        return Tokenizer(std::move(pieces), cfg.eos_token_id);
    }

    TokenId eos() const noexcept { return eos_; }

    /// Encodes text, mapping each "[EOS]" marker to the eos id.
    TokenSeq encode(std::string_view text) const {
        TokenSeq out;
        while (!text.empty()) {
            const auto marker = text.find(kEosMarker);
            encode_plain(text.substr(0, marker), out);
            if (marker == std::string_view::npos) break;
            out.push_back(eos_);
            text.remove_prefix(marker + kEosMarker.size());
        }
        return out;
    }

    /// Decodes ids; the eos id renders as "[EOS]".
    std::string decode(std::span<const TokenId> ids) const {
        std::string out;
        for (TokenId id : ids) {
            if (id == eos_) {
                out += kEosMarker;
            } else {
                if (id >= pieces_.size()) throw Error("decode: token id " + std::to_string(id) + " has no piece");
                out += pieces_[id];
            }
        }
        return out;
    }

private:
    Tokenizer(std::vector<std::string> pieces, TokenId eos) : pieces_(std::move(pieces)), eos_(eos) {
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            if (i == eos_ || pieces_[i].empty()) continue;
            lookup_.emplace(pieces_[i], static_cast<TokenId>(i));
            max_len_ = std::max(max_len_, pieces_[i].size());
        }
    }

    void encode_plain(std::string_view text, TokenSeq& out) const {
        std::size_t i = 0;
        while (i < text.size()) {
            std::size_t len = std::min(max_len_, text.size() - i);
            for (; len > 0; --len) {
                auto it = lookup_.find(std::string(text.substr(i, len)));
                if (it != lookup_.end()) {
                    out.push_back(it->second);
                    break;
                }
            }
            if (len == 0) throw Error("tokenizer: no piece matches byte " + std::to_string(static_cast<unsigned char>(text[i])));
            i += len;
        }
    }

    static std::string unescape(std::string_view s) {
        std::string out;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] != '\\' || i + 1 == s.size()) {
                out += s[i];
                continue;
            }
            const char c = s[++i];
            if (c == 'n') {
                out += '\n';
            } else if (c == 't') {
                out += '\t';
            } else if (c == '\\') {
                out += '\\';
            } else if (c == 'x' && i + 2 < s.size()) {
                out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
                i += 2;
            } else {
                out += '\\';
                out += c;
            }
        }
        return out;
    }

    std::vector<std::string> pieces_;
    std::unordered_map<std::string, TokenId> lookup_;
    std::size_t max_len_ = 1;
    TokenId eos_;
};

}  // namespace nlprune
