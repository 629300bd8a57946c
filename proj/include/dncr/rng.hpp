// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dncr {

// Counter-based seed derivation. Every consumer of randomness derives its
// own generator from (base seed, stream name, counters), so resuming a run
// never requires serializing generator state.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derive a sub-stream seed from a base seed, a stream name and up to two
// counters (e.g. lesson index and step index).
inline uint64_t derive_seed(uint64_t base, std::string_view stream, uint64_t a = 0,
                            uint64_t b = 0) {
  uint64_t h = splitmix64(base ^ fnv1a(stream));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return h;
}

inline std::mt19937_64 make_rng(uint64_t base, std::string_view stream, uint64_t a = 0,
                                uint64_t b = 0) {
  return std::mt19937_64(derive_seed(base, stream, a, b));
}

}  // namespace dncr
