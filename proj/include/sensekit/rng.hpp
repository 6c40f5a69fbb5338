#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sensekit {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Child seed for the `index`-th unit of work under `parent`. Independent of
/// scheduling order.
constexpr std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) noexcept {
    return mix64(mix64(parent) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Named sub-seed (e.g. "simulate", "balance"), FNV-1a over the name.
constexpr std::uint64_t named_seed(std::uint64_t parent, std::string_view name) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return child_seed(parent, h);
}

} // namespace sensekit
