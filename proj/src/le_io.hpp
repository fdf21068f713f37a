#pragma once

// Little-endian float32 / integer helpers shared by the LOTD and KB blob code.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace lot::detail {

inline std::uint32_t bswap32(std::uint32_t v) {
    return ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) | ((v & 0x00FF0000u) >> 8) |
           ((v & 0xFF000000u) >> 24);
}

inline void put_u32(std::ostream &out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char *>(b), 4);
}

inline void put_u64(std::ostream &out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char *>(b), 8);
}

inline std::uint32_t get_u32(const unsigned char *b) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(const unsigned char *b) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void put_f32(std::ostream &out, std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char *>(values.data()),
                  static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (float f : values) {
            put_u32(out, std::bit_cast<std::uint32_t>(f));
        }
    }
}

inline void get_f32(const unsigned char *src, std::size_t count, std::vector<float> &dst) {
    dst.resize(count);
    std::memcpy(dst.data(), src, count * sizeof(float));
    if constexpr (std::endian::native != std::endian::little) {
        for (float &f : dst) f = std::bit_cast<float>(bswap32(std::bit_cast<std::uint32_t>(f)));
    }
}

} // namespace lot::detail
