#pragma once

#include <cstdint>

namespace davt {

// splitmix64 finalizer (Stafford variant 13).
std::uint64_t mix64(std::uint64_t x);

// Folds a 128-bit product into 64 bits (multiply-xor fold).
std::uint64_t mum(std::uint64_t a, std::uint64_t b);

// Counter-based generator: draw i is mix64(seed + (i+1) * GOLDEN_GAMMA).
// The whole stream is a pure function of the seed, so datasets regenerate
// bit-identically from a recorded seed on any platform with IEEE doubles.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53 random bits.
  double next_double();

  // Uniform integer in [0, n), n >= 1.
  std::size_t next_index(std::size_t n);

  // Standard normal via Box-Muller (no ziggurat); second value cached.
  double next_gaussian();

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

namespace seed_role {
inline constexpr std::uint64_t kStream = 1;              // per-trial data stream
inline constexpr std::uint64_t kModelInit = 2;           // per-trial model init
inline constexpr std::uint64_t kAux = 3;                 // per-trial auxiliary draws (permutations, ...)
inline constexpr std::uint64_t kGeneratorConstants = 4;  // experiment-wide constants (trial_index 0)
inline constexpr std::uint64_t kOraclePretrain = 5;      // oracle pretraining data
}  // namespace seed_role

// Collision-free seed splitting: two rounds of 128-bit product mixing over
// (master, trial_index, role), truncated to 64 bits. Constants are fixed so
// other implementations can reproduce the derivation exactly.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial_index, std::uint64_t role);

}  // namespace davt
