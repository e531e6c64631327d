#pragma once

#include <cstdint>
#include <string_view>

namespace specmpc {

// Counter-based generator. Draw i of a stream is SplitMix64's finalizer
// applied to seed + (i + 1) * 0x9E3779B97F4A7C15, so a stream is fully
// described by (seed, position) and is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  // Standard normal via Box-Muller; always consumes exactly two draws.
  double normal();

  // Independent child stream. Children with different labels (or integer
  // keys) do not overlap in any practical sense; the parent is untouched.
  Rng fork(std::string_view label) const;
  Rng fork(std::uint64_t key) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return counter_; }
  void seek(std::uint64_t position) { counter_ = position; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace specmpc
