#pragma once

#include <cstdint>
#include <random>

namespace schedgraph {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Named seed streams. Every random draw in the library is fed from
// derive_seed(root_seed, stream, index) so components stay independent.
enum class SeedStream : std::uint64_t {
  kGenerate = 1,
  kInject = 2,
  kParamInit = 3,
  kDropout = 4,
  kShuffle = 5,
  kBenchmark = 6,
};

constexpr std::uint64_t derive_seed(std::uint64_t root, SeedStream stream,
                                    std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ (static_cast<std::uint64_t>(stream) << 56)) + index);
}

}  // namespace schedgraph
