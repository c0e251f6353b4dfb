#include "gengap/rng.hpp"

#include <cmath>
#include <numbers>

namespace gengap {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h + kGolden + mix64(v));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k, std::uint64_t j,
                          SeedRole role) noexcept {
  auto h = mix64(base);
  h = hash_combine(h, k);
  h = hash_combine(h, j);
  return hash_combine(h, static_cast<std::uint64_t>(role));
}

std::uint64_t derive_seed(std::uint64_t base, SeedRole role) noexcept {
  return hash_combine(mix64(base), static_cast<std::uint64_t>(role));
}

double counter_uniform(std::uint64_t key, std::uint64_t index) noexcept {
  const auto bits = mix64(hash_combine(key, index));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::next() noexcept {
  state_ += kGolden;
  return mix64(state_);
}

double RandomStream::uniform() noexcept {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() noexcept {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(a);
  return r * std::cos(a);
}

std::uint64_t RandomStream::below(std::uint64_t n) noexcept {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return x % n;
}

}  // namespace gengap
