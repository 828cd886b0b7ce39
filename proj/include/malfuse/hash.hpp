#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace mf {

// 64-bit FNV-1a. Used for feature hashing, featurizer config hashes and
// content hashes in run manifests; stable across platforms.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = kFnvOffset) {
    for (std::uint8_t c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

}  // namespace mf
