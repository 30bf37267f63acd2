#pragma once

#include <cstdint>
#include <vector>

namespace cfglab {

/// SplitMix64 finalizer; full-avalanche 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Counter-based random stream. Output depends only on (seed, counter), so a
/// stream can be replayed, forked, or consumed from any point with identical
/// results regardless of evaluation order.
struct RandomStream {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    explicit RandomStream(std::uint64_t s, std::uint64_t c = 0) : seed(s), counter(c) {}

    std::uint64_t next_u64() {
        return mix64(mix64(seed) + 0x9e3779b97f4a7c15ull * counter++);
    }

    /// Uniform in (0, 1]; never returns 0 so log(u) is always finite.
    double uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (cos branch only). Consumes exactly two
    /// counter positions per draw; no cached spare, so state stays (seed, counter).
    double normal();

    /// Uniform index in [0, n). Modulo bias is ~n/2^64, irrelevant at desk scale.
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    /// Derived child stream; independent of this stream for distinct tags.
    RandomStream fork(std::uint64_t tag) const {
        return RandomStream(mix64(mix64(seed) ^ mix64(tag ^ 0xa5a5a5a5a5a5a5a5ull)));
    }
};

/// n i.i.d. standard normal draws.
std::vector<double> gaussian(RandomStream& stream, std::size_t n);

/// Fans an experiment seed out to per-purpose sub-seeds via tag hashing.
std::uint64_t fan_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

}  // namespace cfglab
