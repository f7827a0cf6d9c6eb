// Copyright 2026 The nlprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nlprune/common.hpp"

namespace nlprune {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path.string());
}

/// Splits text into lines, dropping a trailing '\r' from each.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<std::string> lines = split(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    for (auto& l : lines)
        if (!l.empty() && l.back() == '\r') l.pop_back();
    return lines;
}

/// Shortest decimal representation that round-trips.
inline std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("number formatting failed");
    return std::string(buf, end);
}

inline double parse_number(std::string_view s, std::string_view what) {
    s = trim(s);
    double v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw Error("invalid number for " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

// CSV: comma separated, text fields always double-quoted, numbers bare.

class CsvWriter {
public:
    CsvWriter& text(std::string_view s) {
        sep();
        line_ += '"';
        for (char c : s) {
            if (c == '"') line_ += '"';
            line_ += c;
        }
        line_ += '"';
        return *this;
    }
    CsvWriter& number(double v) {
        sep();
        line_ += format_number(v);
        return *this;
    }
    CsvWriter& integer(long long v) {
        sep();
        line_ += std::to_string(v);
        return *this;
    }
    CsvWriter& empty() {
        sep();
        return *this;
    }
    void end_row() {
        out_ += line_;
        out_ += '\n';
        line_.clear();
        first_ = true;
    }
    const std::string& str() const noexcept { return out_; }

private:
    void sep() {
        if (!first_) line_ += ',';
        first_ = false;
    }
    std::string out_;
    std::string line_;
    bool first_ = true;
};

/// RFC 4180 style reader; quoted fields may contain commas, quotes and newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            field.clear();
            row.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw Error("unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace nlprune
