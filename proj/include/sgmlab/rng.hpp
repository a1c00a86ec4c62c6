#pragma once

#include <cstdint>
#include <string_view>

namespace sgm {

/// Identifier written into every output so runs can be matched to the generator.
inline constexpr std::string_view kRngAlgorithm = "splitmix64-substreams/box-muller-v1";

/// Substream tags. Every consumer of randomness draws from its own tag so that
/// adding a consumer never shifts the draws of an existing one.
enum class StreamTag : std::uint64_t {
    MeasureSample = 1,
    ForwardNoise = 2,
    ReverseNoise = 3,
    PriorSample = 4,
    SlopeSample = 5,
    Misc = 99,
};

/// SplitMix64 output function applied to a state advanced by the golden gamma.
std::uint64_t splitmix64(std::uint64_t& state);

/// Independent generator for (seed, tag, index): a SplitMix64 sequence whose
/// starting state is a hash of the triple. Normals come from Box-Muller on
/// 53-bit uniforms, consumed in pairs, so the sequence is fully specified here
/// and does not depend on standard-library distribution code.
class Substream {
public:
    Substream(std::uint64_t seed, StreamTag tag, std::uint64_t index);

    std::uint64_t next_u64() { return splitmix64(state_); }
    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace sgm
