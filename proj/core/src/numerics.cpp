#include "gengap/numerics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gengap/errors.hpp"

namespace gengap {

namespace {

void check_logits(std::span<const double> logits) {
  if (logits.size() < 2) {
    throw DomainError("softmax requires at least two logits");
  }
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericInputError("non-finite logit");
  }
}

void check_normalized(std::span<const double> p, const char* which) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) {
      throw DomainError(fmt::format("kl_div: {} has a negative or NaN entry",
                                    which));
    }
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) {
    throw DomainError(
        fmt::format("kl_div: {} sums to {:.12g}, not 1", which, s));
  }
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  check_logits(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  check_logits(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  const double log_z = mx + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

double kl_div_unchecked(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], kProbClamp));
  }
  return kl;
}

double kl_div(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ShapeError(
        fmt::format("kl_div: lengths {} and {} differ", p.size(), q.size()));
  }
  check_normalized(p, "p");
  check_normalized(q, "q");
  return kl_div_unchecked(p, q);
}

double cross_entropy(std::span<const double> logits, std::size_t label,
                     double smoothing) {
  if (label >= logits.size()) throw DomainError("label out of range");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw DomainError("label smoothing must lie in [0, 1)");
  }
  const auto lsm = log_softmax(logits);
  const double c = static_cast<double>(logits.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < lsm.size(); ++i) {
    const double t = smoothing / c + (i == label ? 1.0 - smoothing : 0.0);
    loss -= t * lsm[i];
  }
  return loss;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const auto half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace gengap
