#include <cmath>

#include <fmt/format.h>

#include "gengap/errors.hpp"
#include "gengap/metrics.hpp"

namespace gengap {

double psi(double lambda) {
  if (!(lambda > 0.0)) throw DomainError("psi: lambda must be > 0");
  if (lambda < 1e-4) return 0.5 + lambda / 6.0 + lambda * lambda / 24.0;
  return (std::expm1(lambda) - lambda) / (lambda * lambda);
}

void BoundInputs::validate() const {
  if (!(D >= 0.0) || !(I >= 0.0) || !(gamma >= 0.0)) {
    throw DomainError("bound inputs D, I and gamma must be nonnegative");
  }
  if (!(n >= 1.0)) throw DomainError("bound input n must be >= 1");
}

double bound_objective(const BoundInputs& b, double lambda) {
  return b.gamma * b.gamma * psi(lambda) * lambda * b.D + b.I / (lambda * b.n);
}

BoundResult bound_rhs(const BoundInputs& b) {
  b.validate();
  if (b.I == 0.0) {
    // The infimum is the lambda -> 0 limit, which is exactly 0.
    return {kBoundLambdaMin, 0.0};
  }
  // bound_objective is convex in lambda, hence unimodal in ln(lambda).
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::log(kBoundLambdaMin);
  double hi = std::log(kBoundLambdaMax);
  auto f = [&](double t) { return bound_objective(b, std::exp(t)); };
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int iter = 0; iter < 500 && std::exp(hi) - std::exp(lo) > 1e-9; ++iter) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  BoundResult best{std::exp(0.5 * (lo + hi)), 0.0};
  best.value = bound_objective(b, best.lambda);
  for (double lam : {kBoundLambdaMin, kBoundLambdaMax, std::exp(x1), std::exp(x2)}) {
    const double v = bound_objective(b, lam);
    if (v < best.value) best = {lam, v};
  }
  return best;
}

double simplified_bound(const BoundInputs& b) {
  b.validate();
  if (b.I > b.n * b.gamma * b.gamma * b.D) {
    throw DomainError(fmt::format(
        "simplified bound requires I <= n * gamma^2 * D ({} > {})", b.I,
        b.n * b.gamma * b.gamma * b.D));
  }
  return 2.0 * b.gamma * std::sqrt(b.D * b.I / b.n);
}

}  // namespace gengap
