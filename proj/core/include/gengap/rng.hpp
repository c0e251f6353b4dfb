#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace gengap {

/// SplitMix64 finalizer: a bijective 64-bit mix.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Order-sensitive combination of a running hash with one more word.
std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept;

/// Roles distinguish independent streams derived from one seed.
enum class SeedRole : std::uint64_t {
  kCell = 0,
  kInit = 1,
  kData = 2,
  kAugment = 3,
  kPartnerA = 4,
  kPartnerB = 5,
  kUnlabeled = 6,
  kProbe = 7,
};

/// Sub-seed for grid cell (k, j) and a stream role:
/// mix of (base, k, j, role) through hash_combine.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k, std::uint64_t j,
                          SeedRole role) noexcept;
std::uint64_t derive_seed(std::uint64_t base, SeedRole role) noexcept;

/// Uniform [0, 1) value at position `index` of the counter stream `key`.
double counter_uniform(std::uint64_t key, std::uint64_t index) noexcept;

/// Sequential SplitMix64 stream. All conversions to floating point are
/// spelled out here so results do not depend on the standard library.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }
  /// Standard normal by the Box-Muller transform.
  double normal() noexcept;
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
  std::optional<double> spare_normal_;
};

}  // namespace gengap
