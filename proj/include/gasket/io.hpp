#pragma once

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "gasket/error.hpp"

namespace gasket::io {

/// 17 significant digits, scientific, '.' separator; round-trips every double.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", x);
    return buf;
}

/// Writes `content` to `path` via a temporary file and rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content, bool binary = false) {
    if (path.empty()) throw DomainError("empty output path");
    const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    if (!std::filesystem::exists(dir)) std::filesystem::create_directories(dir);
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error("write failed for " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

/// Minimal CSV builder; doubles go through format_double.
class Csv {
public:
    explicit Csv(const std::vector<std::string>& header) { row_strings(header); }

    template <class... Fields>
    void row(const Fields&... f) {
        bool first = true;
        ((put(f, first)), ...);
        out_ << '\n';
    }

    void row_strings(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

private:
    void sep(bool& first) {
        if (!first) out_ << ',';
        first = false;
    }
    void put(double x, bool& first) {
        sep(first);
        out_ << format_double(x);
    }
    void put(const std::string& s, bool& first) {
        sep(first);
        out_ << s;
    }
    void put(const char* s, bool& first) { put(std::string(s), first); }
    template <class I, std::enable_if_t<std::is_integral_v<I>, int> = 0>
    void put(I v, bool& first) {
        sep(first);
        out_ << v;
    }

    std::ostringstream out_;
};

/// Little-endian binary writer for the eigen dump.
class BinaryWriter {
public:
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f64(double x) {
        std::uint64_t v;
        static_assert(sizeof v == sizeof x);
        std::memcpy(&v, &x, sizeof v);
        u64(v);
    }
    const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

}  // namespace gasket::io
