#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "trajkit/errors.hpp"

// Little-endian binary primitives shared by the .trkz/.winz/.ckpt formats.
// Readers throw CorruptFile on any truncation or bad magic and
// VersionMismatch on an unknown format version.

namespace trajkit::binio {

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void magic(std::string_view tag) { out_.write(tag.data(), static_cast<std::streamsize>(tag.size())); }

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out_.write(b, 4);
    }

    void u64(std::uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out_.write(b, 8);
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }

    void str(std::string_view s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void f64_vec(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }

    bool ok() const { return static_cast<bool>(out_); }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void expect_magic(std::string_view tag) {
        std::string got(tag.size(), '\0');
        in_.read(got.data(), static_cast<std::streamsize>(tag.size()));
        if (!in_ || got != tag) {
            throw CorruptFile("bad magic: expected '" + std::string(tag) + "'");
        }
    }

    std::uint8_t u8() {
        int c = in_.get();
        if (c == std::char_traits<char>::eof()) throw CorruptFile("unexpected end of file");
        return static_cast<std::uint8_t>(c);
    }

    std::uint32_t u32() {
        char b[4];
        read_exact(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        char b[8];
        read_exact(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        return v;
    }

    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::string str(std::uint64_t max_len = (1ull << 32)) {
        std::uint64_t n = u64();
        if (n > max_len) throw CorruptFile("string length out of range");
        std::string s(static_cast<std::size_t>(n), '\0');
        read_exact(s.data(), static_cast<std::streamsize>(n));
        return s;
    }

    std::vector<double> f64_vec(std::uint64_t max_len = (1ull << 32)) {
        std::uint64_t n = u64();
        if (n > max_len) throw CorruptFile("vector length out of range");
        std::vector<double> v(static_cast<std::size_t>(n));
        for (double& x : v) x = f64();
        return v;
    }

private:
    void read_exact(char* dst, std::streamsize n) {
        in_.read(dst, n);
        if (in_.gcount() != n) throw CorruptFile("unexpected end of file");
    }

    std::istream& in_;
};

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for reading: " + path);
    return in;
}

} // namespace trajkit::binio
