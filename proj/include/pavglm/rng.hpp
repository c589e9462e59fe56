#pragma once

// Seeded random streams. Every consumer derives its own engine from the run
// seed, a stream name and an index, so results do not depend on the order in
// which tasks run.

#include <cstdint>
#include <random>
#include <string_view>

namespace pavglm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, fixed across platforms (unlike std::hash).
inline std::uint64_t name_hash(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ name_hash(name)) ^ index);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  return std::mt19937_64(stream_seed(seed, name, index));
}

}  // namespace pavglm
