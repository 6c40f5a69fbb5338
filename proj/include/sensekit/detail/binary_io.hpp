#pragma once

#include <sensekit/error.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace sensekit::detail {

// Little-endian scalar I/O for the binary file formats.

template <typename T>
    requires std::is_arithmetic_v<T>
void write_le(std::ostream& os, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    os.write(bytes.data(), sizeof(T));
}

template <typename T>
    requires std::is_arithmetic_v<T>
T read_le(std::istream& is) {
    std::array<char, sizeof(T)> bytes;
    if (!is.read(bytes.data(), sizeof(T))) {
        throw DataError("unexpected end of file");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

inline void write_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char (&magic)[5], const std::string& what) {
    char got[4] = {};
    if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
        throw DataError(what + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
    }
}

inline std::string read_bytes(std::istream& is, std::size_t n) {
    std::string s(n, '\0');
    if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) {
        throw DataError("unexpected end of file");
    }
    return s;
}

} // namespace sensekit::detail
