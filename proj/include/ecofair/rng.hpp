#pragma once

#include <cstdint>

namespace ecofair {

// Counter-based draws: the value at (seed, stream, index) does not depend on
// how many other draws were made, so disjoint index ranges can be sampled in
// any order or on any thread with identical results.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

// Uniform in [0, 1) with 53 random bits.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
    return static_cast<double>(counter_bits(seed, stream, index) >> 11) * 0x1.0p-53;
}

// Per-replicate seed derived from an experiment's base seed.
constexpr std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) noexcept {
    return splitmix64(base_seed ^ splitmix64(index + 0x5851f42d4c957f2dULL));
}

}  // namespace ecofair
