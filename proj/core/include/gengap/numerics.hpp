#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gengap {

/// Floor applied to the second argument of kl_div.
inline constexpr double kProbClamp = 1e-12;

/// Max-shifted softmax. Throws NumericInputError on non-finite logits and
/// DomainError on fewer than two entries.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

/// KL(p || q) in nats with q floored at kProbClamp and 0 ln 0 = 0. Both
/// arguments must sum to 1 within 1e-9.
double kl_div(std::span<const double> p, std::span<const double> q);

/// Same as kl_div without the normalization check, for hot loops over rows
/// already validated.
double kl_div_unchecked(std::span<const double> p, std::span<const double> q);

/// Smoothed cross-entropy of one example.
double cross_entropy(std::span<const double> logits, std::size_t label,
                     double smoothing = 0.0);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Pairwise (cascade) summation; deterministic for a given input order.
double pairwise_sum(std::span<const double> values);

}  // namespace gengap
