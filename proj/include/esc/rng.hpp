/**
 * @file rng.hpp
 * @brief Counter-based random numbers: every draw is a pure function of
 *        (seed, stream, counter), so results do not depend on the platform's
 *        <random> implementation.
 */
#pragma once

#include <cstdint>

namespace esc {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derive an independent seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label);

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  /// +1 or -1 with equal probability.
  double rademacher();
  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace esc
