#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace stressbench {

std::uint64_t splitmix64(std::uint64_t x);

// Stable per-item seed: hash(master_seed, key).
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view key);

// Counter-based generator: draw i is splitmix64(seed + i * golden). Gaussians
// use Box-Muller over pairs of draws. Reproducible given (seed, draw index),
// independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  // Uniform on (0, 1].
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double gaussian();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace stressbench
