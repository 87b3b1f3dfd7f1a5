#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nnk {

/// All randomness in a run flows from one root seed. Named substreams keep
/// the consumers (shuffle, dropout, init, kmeans, ...) decoupled: drawing
/// more numbers from one stream never perturbs another.
inline std::uint64_t substream_seed(std::uint64_t root, std::string_view name) {
  // FNV-1a over the stream name, mixed with the root via splitmix64.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = root + 0x9e3779b97f4a7c15ull + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::string_view name) {
  return std::mt19937_64(substream_seed(root, name));
}

}  // namespace nnk
