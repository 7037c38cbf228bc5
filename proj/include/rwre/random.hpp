#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rwre {

// splitmix64 finalizer; the building block for all counter-keyed randomness.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ mix64(v));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = mix64(base);
  for (auto k : keys) h = hash_combine(h, k);
  return h;
}

// Top 53 bits mapped to [0, 1). Used instead of std::uniform_real_distribution,
// whose output is not specified bit-for-bit across standard libraries.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Per-replica sequential stream.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(mix64(seed)) {}

  double uniform() { return to_unit(engine_()); }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Salts separating environment, walk and mark randomness of one replica.
inline constexpr std::uint64_t kEnvSalt = 0x656e7669726f6eULL;
inline constexpr std::uint64_t kWalkSalt = 0x77616c6b6572ULL;

}  // namespace rwre
