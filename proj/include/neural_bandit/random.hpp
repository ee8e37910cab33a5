#pragma once

#include <cstdint>
#include <random>

namespace neural_bandit {

using Rng = std::mt19937_64;

// Independent stream for a (seed, stream id) pair. Runs derive environment and
// policy streams from the repetition seed so that neither perturbs the other.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6e62u};
  return Rng(seq);
}

namespace streams {
inline constexpr std::uint64_t kEnvironment = 1;
inline constexpr std::uint64_t kPolicy = 2;
inline constexpr std::uint64_t kInitialization = 3;
inline constexpr std::uint64_t kShuffle = 4;
}  // namespace streams

}  // namespace neural_bandit
