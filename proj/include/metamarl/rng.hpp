#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace metamarl {

// splitmix64 finalizer; used both as a mixer and to expand seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a master seed, a stream tag and
// indices. Streams keyed this way are stable across worker counts.
inline std::uint64_t stream_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return mix64(mix64(mix64(master ^ h) ^ a) ^ b);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

// Uniform double in [0, 1). Hand-rolled so sequences are identical across
// standard library implementations.
inline double next_double(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * next_double(rng);
}

// Samples an index from unnormalized non-negative weights.
inline int sample_index(Rng& rng, const double* w, int n) {
  double total = 0;
  for (int i = 0; i < n; ++i) total += w[i];
  double u = next_double(rng) * total;
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace metamarl
