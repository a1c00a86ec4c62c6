#include "sgmlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace sgm {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) { return mix64(state += kGamma); }

Substream::Substream(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
    std::uint64_t key = mix64(seed + kGamma);
    key = mix64(key ^ (static_cast<std::uint64_t>(tag) * 0xD1B54A32D192ED03ULL));
    state_ = mix64(key ^ mix64(index * 0x8CB92BA72F3D8DD7ULL + kGamma));
}

double Substream::uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

double Substream::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

}  // namespace sgm
