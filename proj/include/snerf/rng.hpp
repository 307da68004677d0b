#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace snerf {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of a named substream of a root seed ("scene", "init", "rays", ...).
inline std::uint64_t substream(std::uint64_t root, std::string_view name) {
  return splitmix64(root ^ splitmix64(fnv1a(name)));
}

inline std::uint64_t substream(std::uint64_t root, std::uint64_t index) {
  return splitmix64(root ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Counter-based uniform in [0, 1): a pure function of its key.
inline double hashed_uniform(std::uint64_t key) {
  return double(splitmix64(key) >> 11) * 0x1.0p-53;
}

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return lo + (hi - lo) * (double(rng() >> 11) * 0x1.0p-53);
}

}  // namespace snerf
