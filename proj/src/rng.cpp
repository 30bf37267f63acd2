#include "cfglab/rng.hpp"

#include <cmath>
#include <numbers>

namespace cfglab {

double RandomStream::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> gaussian(RandomStream& stream, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = stream.normal();
    }
    return out;
}

std::uint64_t fan_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = mix64(base);
    for (std::uint64_t t : tags) {
        h = mix64(h ^ mix64(t));
    }
    return h;
}

}  // namespace cfglab
