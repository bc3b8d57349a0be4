#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace estformer {

// Seeded 64-bit generator. Every stochastic routine takes one of these by
// reference; nothing in the library draws from a global source.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::string name = "rng")
      : engine_(seed), name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Normal resampled until it lies within two standard deviations.
  double truncated_normal(double stddev) {
    for (;;) {
      const double v = normal(0.0, 1.0);
      if (v >= -2.0 && v <= 2.0) return v * stddev;
    }
  }
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    // Fisher-Yates with our own index draws so the order does not depend on
    // the standard library's shuffle implementation.
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::string name_;
};

}  // namespace estformer
