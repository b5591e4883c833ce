#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace kgcrs {

// Deterministic RNG: every stochastic step draws from one of these, seeded explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(eng_);
  }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(eng_);
  }

  // Index sampled from unnormalized nonnegative weights.
  int sample_weights(const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = uniform(0.0, total);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return static_cast<int>(i);
    }
    for (std::size_t i = w.size(); i-- > 0;)
      if (w[i] > 0.0) return static_cast<int>(i);
    return static_cast<int>(w.size()) - 1;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), eng_);
  }

  std::uint64_t raw() { return eng_(); }

  // Independent child stream (used for per-session seeds in parallel eval).
  Rng fork() { return Rng(eng_()); }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace kgcrs
