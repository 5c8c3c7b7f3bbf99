#pragma once
#include <cstdint>
#include <random>

namespace itr {

// splitmix64: cheap, well-mixed stream used to derive independent per-task
// seeds from (master seed, counter). Order-independent, so parallel schedules
// cannot change results.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
  return splitmix64(master ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
}

using RngEngine = std::mt19937_64;

inline RngEngine make_engine(std::uint64_t seed) { return RngEngine(splitmix64(seed)); }

}  // namespace itr
