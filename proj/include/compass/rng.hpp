#pragma once

// Seeded random streams. Every stochastic decision draws from an engine whose
// seed is derived from (master seed, stream coordinates), never from shared
// state, so results do not depend on scheduling.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace compass {

using Rng = std::mt19937_64;

// FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * coords.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto c : coords) push(c);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace compass
