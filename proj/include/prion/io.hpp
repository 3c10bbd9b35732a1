#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "prion/error.hpp"

namespace prion::io {

/// Shortest text that is stable across runs: 17 significant digits, '.' decimal point,
/// independent of the locale.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

/// Column-oriented CSV table with a header row.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(std::span<const double> values) {
        if (values.size() != header_.size()) throw Error("CSV row width does not match header");
        rows_.emplace_back(values.begin(), values.end());
    }
    void add_row(std::initializer_list<double> values) {
        add_row(std::span<const double>(values.begin(), values.size()));
    }

    std::size_t rows() const noexcept { return rows_.size(); }

    std::string str() const {
        std::string out;
        for (std::size_t j = 0; j < header_.size(); ++j) {
            if (j) out += ',';
            out += header_[j];
        }
        out += '\n';
        for (const auto& row : rows_) {
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (j) out += ',';
                out += format_double(row[j]);
            }
            out += '\n';
        }
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<double>> rows_;
};

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open '" + path.string() + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw Error("failed writing '" + path.string() + "'");
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path.string() + "'");
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace prion::io
