#pragma once

#include <cstdint>
#include <string_view>

namespace hflight {

// Stable 64-bit hashing used everywhere a seed is derived from structured
// inputs (global seed, node id, round). std::hash is implementation-defined,
// these are not, so runs reproduce across launcher modes and rebuilds.

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for one worker's local training in one round.
inline std::uint64_t mix_seed(std::uint64_t global_seed, std::string_view node_id,
                              std::uint64_t round) {
    std::uint64_t h = fnv1a_u64(global_seed);
    h = fnv1a(node_id, h);
    h = fnv1a_u64(round, h);
    return splitmix64(h);
}

}  // namespace hflight
