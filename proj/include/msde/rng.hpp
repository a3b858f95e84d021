#pragma once

#include <cstdint>
#include <random>

namespace msde {

using Engine = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-derived stream seed: independent of how streams are distributed
/// over workers. `purpose` separates unrelated consumers of the same base seed
/// (noise paths, probes, optimizer restarts).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t purpose = 0) noexcept {
    return mix64(mix64(base ^ mix64(purpose + 0x5851f42d4c957f2dULL)) + stream);
}

inline Engine make_engine(std::uint64_t seed) {
    return Engine(seed);
}

}  // namespace msde
