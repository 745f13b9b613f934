#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace skywatch::binio {

// Model files are little-endian; values are written as raw bit patterns so
// that a save/load round trip is exact.

inline void write_u32(std::ostream& out, std::uint32_t v) {
    std::array<unsigned char, 4> b{};
    for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
    out.write(reinterpret_cast<const char*>(b.data()), 4);
}

inline void write_i32(std::ostream& out, std::int32_t v) { write_u32(out, static_cast<std::uint32_t>(v)); }

inline void write_u64(std::ostream& out, std::uint64_t v) {
    std::array<unsigned char, 8> b{};
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
    out.write(reinterpret_cast<const char*>(b.data()), 8);
}

inline void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    write_u64(out, bits);
}

inline void write_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline void require(std::istream& in) {
    if (!in) throw std::runtime_error("truncated model file");
}

inline std::uint32_t read_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    require(in);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
    return v;
}

inline std::int32_t read_i32(std::istream& in) { return static_cast<std::int32_t>(read_u32(in)); }

inline std::uint64_t read_u64(std::istream& in) {
    std::array<unsigned char, 8> b{};
    in.read(reinterpret_cast<char*>(b.data()), 8);
    require(in);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return v;
}

inline double read_f64(std::istream& in) {
    const std::uint64_t bits = read_u64(in);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
    char got[4] = {};
    in.read(got, 4);
    if (!in || std::memcmp(got, magic, 4) != 0)
        throw std::runtime_error(std::string("bad model magic, expected ") + magic);
}

/// Bounded count read, guarding against absurd allocations from corrupt files.
inline std::uint32_t read_count(std::istream& in, std::uint32_t limit) {
    const std::uint32_t n = read_u32(in);
    if (n > limit) throw std::runtime_error("corrupt model file: count out of range");
    return n;
}

}  // namespace skywatch::binio
