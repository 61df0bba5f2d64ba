#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace netable {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Child seed for an independent stream (per dialog, per story, per split).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

// The master seed fans out into three streams so data, initialization and
// example order can be varied independently.
struct SeedSet {
  std::uint64_t master = 0;
  std::uint64_t data = 0;
  std::uint64_t init = 0;
  std::uint64_t shuffle = 0;
};

inline SeedSet split_seed(std::uint64_t master) {
  return SeedSet{master, derive_seed(master, 1), derive_seed(master, 2), derive_seed(master, 3)};
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

template <class T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  return items[uniform_index(rng, items.size())];
}

inline bool coin(Rng& rng, double p = 0.5) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

}  // namespace netable
