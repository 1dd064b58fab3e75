#pragma once

// Feature files, CSV tables and run configuration.
//
// Feature file layout (all integers u32 little-endian):
//
//   "MNCE" | version = 1 | layer_count
//   per layer: layer_id | N | D | N*D float32 LE, row-major
//
// The declared sizes must account for every byte of the file.

#include "monce/features.hpp"
#include "monce/losses.hpp"
#include "monce/types.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

namespace monce::io {

inline constexpr std::array<char, 4> kMagic{'M', 'N', 'C', 'E'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xFFu));
}

inline std::uint32_t get_u32(std::span<const unsigned char> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Write to a sibling temp file and rename, so a failed write never leaves a
// partial file at `path`.
inline void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorKind::Io, "cannot move output into place at " + path.string());
    }
}

}  // namespace detail

/// Encodes layers into the feature file byte layout. Values are narrowed to
/// float32.
inline std::vector<unsigned char> encode_features(const LayeredFeatureSet& lfs) {
    std::vector<unsigned char> out(kMagic.begin(), kMagic.end());
    detail::put_u32(out, kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(lfs.layers.size()));
    for (const auto& layer : lfs.layers) {
        detail::put_u32(out, layer.layer_id);
        detail::put_u32(out, static_cast<std::uint32_t>(layer.n_patches()));
        detail::put_u32(out, static_cast<std::uint32_t>(layer.dim()));
        for (Eigen::Index i = 0; i < layer.n_patches(); ++i) {
            for (Eigen::Index d = 0; d < layer.dim(); ++d) {
                detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(layer.data(i, d))));
            }
        }
    }
    return out;
}

/// Parses feature file bytes. Rows are normalized on load.
inline LayeredFeatureSet decode_features(std::span<const unsigned char> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
        throw Error(ErrorKind::BadMagic, "missing MNCE magic");
    }
    if (bytes.size() < 12) throw Error(ErrorKind::TruncatedFile, "header shorter than 12 bytes");
    const std::uint32_t version = detail::get_u32(bytes, 4);
    if (version != kVersion) {
        throw Error(ErrorKind::BadVersion, "unsupported version " + std::to_string(version));
    }
    const std::uint32_t layer_count = detail::get_u32(bytes, 8);
    std::size_t at = 12;
    LayeredFeatureSet out;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const std::string where = "layer index " + std::to_string(l);
        if (bytes.size() - at < 12) throw Error(ErrorKind::TruncatedFile, where + ": header cut short");
        const std::uint32_t id = detail::get_u32(bytes, at);
        const std::uint64_t n = detail::get_u32(bytes, at + 4);
        const std::uint64_t d = detail::get_u32(bytes, at + 8);
        at += 12;
        if (n == 0 || d == 0) throw Error(ErrorKind::BadShape, where + ": N and D must be >= 1");
        if (n * d > (bytes.size() - at) / 4) {
            throw Error(ErrorKind::TruncatedFile, where + ": expects " + std::to_string(n * d) + " floats, " +
                                                      std::to_string(bytes.size() - at) + " bytes remain");
        }
        Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index k = 0; k < m.cols(); ++k) {
                m(i, k) = static_cast<double>(std::bit_cast<float>(detail::get_u32(bytes, at)));
                at += 4;
            }
        }
        try {
            out.layers.push_back(normalize_rows(m, id));
        } catch (const Error& e) {
            throw e.with_context(where + " (id " + std::to_string(id) + ")");
        }
    }
    if (at != bytes.size()) {
        throw Error(ErrorKind::TrailingData, std::to_string(bytes.size() - at) + " bytes past the last layer");
    }
    out.validate();
    return out;
}

inline LayeredFeatureSet read_features(const std::filesystem::path& path) {
    const auto bytes = detail::read_all(path);
    try {
        return decode_features(bytes);
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

inline void write_features(const std::filesystem::path& path, const LayeredFeatureSet& lfs) {
    const auto bytes = encode_features(lfs);
    detail::atomic_write(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

// ---------------------------------------------------------------------------
// CSV

using Cell = std::variant<double, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

inline std::string to_csv(const Table& table) {
    std::string out;
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        if (c) out += ',';
        out += table.columns[c];
    }
    out += '\n';
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != table.columns.size()) {
            throw Error(ErrorKind::BadShape, "csv row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                                                 " cells, expected " + std::to_string(table.columns.size()));
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += ',';
            if (const auto* d = std::get_if<double>(&row[c])) out += format_double(*d);
            else out += std::get<std::string>(row[c]);
        }
        out += '\n';
    }
    return out;
}

inline void write_csv(const std::filesystem::path& path, const Table& table) {
    detail::atomic_write(path, to_csv(table));
}

// ---------------------------------------------------------------------------
// Run configuration: `key = value` lines, '#' starts a comment.

struct RunConfig {
    LossConfig loss;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline double parse_positive(std::string_view key, std::string_view v, std::size_t line) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !std::isfinite(out) || !(out > 0.0)) {
        throw Error(ErrorKind::BadConfig, "line " + std::to_string(line) + ": " + std::string(key) +
                                              " must be a finite positive real, got '" + std::string(v) + "'");
    }
    return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v, std::size_t line) {
    Int out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw Error(ErrorKind::BadConfig, "line " + std::to_string(line) + ": " + std::string(key) +
                                              " must be an integer, got '" + std::string(v) + "'");
    }
    return out;
}

}  // namespace detail

inline RunConfig parse_config(std::string_view text) {
    RunConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::BadConfig, "line " + std::to_string(line_no) + ": expected key=value");
        }
        const auto key = detail::trim(line.substr(0, eq));
        const auto val = detail::trim(line.substr(eq + 1));
        if (key == "tau") cfg.loss.tau = detail::parse_positive(key, val, line_no);
        else if (key == "beta") cfg.loss.beta = detail::parse_positive(key, val, line_no);
        else if (key == "q") cfg.loss.q = detail::parse_positive(key, val, line_no);
        else if (key == "epsilon") cfg.loss.sinkhorn.epsilon = detail::parse_positive(key, val, line_no);
        else if (key == "tol") cfg.loss.sinkhorn.tol = detail::parse_positive(key, val, line_no);
        else if (key == "max_iter") {
            cfg.loss.sinkhorn.max_iter = detail::parse_int<int>(key, val, line_no);
            if (cfg.loss.sinkhorn.max_iter < 1) {
                throw Error(ErrorKind::BadConfig, "line " + std::to_string(line_no) + ": max_iter must be >= 1");
            }
        } else if (key == "seed") cfg.seed = detail::parse_int<std::uint64_t>(key, val, line_no);
        else if (key == "strategy") {
            const auto s = parse_strategy(val);
            if (!s) throw Error(ErrorKind::BadConfig, "line " + std::to_string(line_no) + ": strategy must be hard|easy");
            cfg.loss.strategy = *s;
        } else if (key == "mode") {
            const auto m = parse_mode(val);
            if (!m) {
                throw Error(ErrorKind::BadConfig,
                            "line " + std::to_string(line_no) + ": mode must be patchnce|weightnce|monce");
            }
            cfg.loss.mode = *m;
        } else if (key == "bidirectional") {
            if (val == "true" || val == "1") cfg.loss.bidirectional = true;
            else if (val == "false" || val == "0") cfg.loss.bidirectional = false;
            else throw Error(ErrorKind::BadConfig, "line " + std::to_string(line_no) + ": bidirectional must be true|false");
        } else {
            throw Error(ErrorKind::BadConfig, "line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
        }
    }
    return cfg;
}

inline RunConfig read_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

}  // namespace monce::io
