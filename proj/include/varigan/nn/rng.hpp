#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace varigan::nn {

/// Seeded random stream with fully specified output mapping. Uniform and
/// normal draws are derived from raw mt19937_64 bits (no stdlib
/// distributions, whose algorithms are implementation-defined), so identical
/// seeds give identical streams on every platform, and serialized state
/// round-trips exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. The second value is discarded: no
  /// hidden cache, so state is exactly the engine state.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Derive an independent sub-stream (e.g. one per dataset group).
  Rng fork();

  std::string save_state() const;
  void restore_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace varigan::nn

namespace varigan {
using nn::Rng;
}  // namespace varigan
