// SPDX-License-Identifier: Apache-2.0
//
// Little-endian scalar IO for fixture files.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "kvunion/errors.hpp"

namespace kvunion::io {

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> buf;
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(buf.data(), buf.size());
}

inline std::uint64_t read_u64_le(std::istream& is) {
    std::array<unsigned char, 8> buf;
    is.read(reinterpret_cast<char*>(buf.data()), buf.size());
    KVUNION_CHECK(is.gcount() == 8, ValidationError, "binary: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

inline void write_f32_le(std::ostream& os, std::span<const float> values) {
    std::vector<char> buf(values.size() * 4);
    for (std::size_t n = 0; n < values.size(); ++n) {
        const auto bits = std::bit_cast<std::uint32_t>(values[n]);
        for (int i = 0; i < 4; ++i) buf[n * 4 + i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline std::vector<float> read_f32_le(std::istream& is, std::size_t count) {
    std::vector<unsigned char> buf(count * 4);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    KVUNION_CHECK(static_cast<std::size_t>(is.gcount()) == buf.size(), ValidationError, "binary: truncated payload");
    std::vector<float> out(count);
    for (std::size_t n = 0; n < count; ++n) {
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(buf[n * 4 + i]) << (8 * i);
        out[n] = std::bit_cast<float>(bits);
    }
    return out;
}

}  // namespace kvunion::io
