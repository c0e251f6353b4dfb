#include <cmath>

#include <fmt/format.h>

#include "gengap/errors.hpp"
#include "gengap/metrics.hpp"
#include "gengap/rng.hpp"

namespace gengap {

namespace {

ExampleLossFn example_cross_entropy(const ModelSpec& spec,
                                    const LabeledSet& data) {
  return [&spec, &data](ad::Tape& tape, ad::Var theta, std::size_t i) {
    const std::size_t idx[] = {i};
    auto logits = forward_logits(tape, spec, theta, data.features.gather_rows(idx));
    const std::size_t label[] = {data.labels[i]};
    return ad::softmax_cross_entropy(logits, label);
  };
}

}  // namespace

LossFn mean_cross_entropy_loss(const ModelSpec& spec, const LabeledSet& data) {
  return [&spec, &data](ad::Tape& tape, ad::Var theta) {
    auto logits = forward_logits(tape, spec, theta, data.features);
    return ad::softmax_cross_entropy(logits, data.labels);
  };
}

double one_sharpness(const ExampleLossFn& loss, std::size_t num_examples,
                     const ParamVector& at, double rho) {
  if (!(rho > 0.0)) throw DomainError("one_sharpness: rho must be > 0");
  if (num_examples == 0) throw DomainError("one_sharpness: no examples");
  double total = 0.0;
  for (std::size_t i = 0; i < num_examples; ++i) {
    LossFn fi = [&loss, i](ad::Tape& t, ad::Var th) { return loss(t, th, i); };
    auto [base, g] = value_and_gradient(fi, at);
    const double norm = g.norm2();
    if (norm < 1e-12) continue;
    ParamVector moved = at;
    for (std::size_t p = 0; p < at.size(); ++p) moved[p] += rho * g[p] / norm;
    const double up = evaluate(fi, moved);
    if (!std::isfinite(up)) {
      throw NumericInputError("one_sharpness: non-finite perturbed loss");
    }
    total += up - base;
  }
  return total / static_cast<double>(num_examples);
}

double one_sharpness(const Model& model, const LabeledSet& data, double rho) {
  return one_sharpness(example_cross_entropy(model.spec, data), data.size(),
                       model.params, rho);
}

double mean_example_gradient_norm(const ExampleLossFn& loss,
                                  std::size_t num_examples,
                                  const ParamVector& at) {
  if (num_examples == 0) throw DomainError("no examples");
  double total = 0.0;
  for (std::size_t i = 0; i < num_examples; ++i) {
    LossFn fi = [&loss, i](ad::Tape& t, ad::Var th) { return loss(t, th, i); };
    total += gradient(fi, at).norm2();
  }
  return total / static_cast<double>(num_examples);
}

double mean_example_gradient_norm(const Model& model, const LabeledSet& data) {
  return mean_example_gradient_norm(example_cross_entropy(model.spec, data),
                                    data.size(), model.params);
}

double hessian_top_eigenvalue(const LossFn& loss, const ParamVector& at,
                              const PowerIterationOptions& options) {
  ParamVector v = at.zeros_like();
  RandomStream rng(derive_seed(options.seed, SeedRole::kProbe));
  for (auto& x : v.values()) x = rng.normal();
  double norm = v.norm2();
  for (auto& x : v.values()) x /= norm;

  double previous = std::nan("");
  double estimate = 0.0;
  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    ParamVector hv = hvp(loss, at, v);
    estimate = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) estimate += v[i] * hv[i];
    if (std::abs(estimate - previous) <=
        options.tol * std::max(1.0, std::abs(estimate))) {
      return estimate;
    }
    previous = estimate;
    norm = hv.norm2();
    if (norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = hv[i] / norm;
  }
  throw ConvergenceError(
      fmt::format("power iteration did not settle in {} iterations (last {})",
                  options.max_iters, estimate),
      estimate);
}

double hessian_top_eigenvalue(const Model& model, const LabeledSet& data,
                              const PowerIterationOptions& options) {
  if (data.empty()) throw DomainError("hessian_top_eigenvalue: data is empty");
  return hessian_top_eigenvalue(mean_cross_entropy_loss(model.spec, data),
                                model.params, options);
}

}  // namespace gengap
