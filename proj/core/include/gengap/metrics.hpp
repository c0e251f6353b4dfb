#pragma once

// Output-space estimators over grids of trained models, the generalization
// bound, sharpness measures and plain loss/error evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gengap/autodiff.hpp"
#include "gengap/data.hpp"
#include "gengap/model.hpp"

namespace gengap {

/// Probability outputs of several models on one ordered evaluation set.
/// Row m holds model m's num_points x num_classes block.
struct PredictionMatrix {
  std::string eval_set_id;
  std::size_t num_points = 0;
  std::size_t num_classes = 0;
  std::vector<Lineage> lineage;
  std::vector<double> probs;

  std::size_t num_models() const { return lineage.size(); }
  std::span<const double> at(std::size_t model, std::size_t point) const {
    return std::span<const double>(probs).subspan(
        (model * num_points + point) * num_classes, num_classes);
  }
  /// Shape consistency plus normalization of every row within 1e-9.
  void validate() const;
};

PredictionMatrix predict_matrix(std::span<const Model> models,
                                const Tensor& eval, std::string eval_set_id);

/// Binary layout: "GGPM" | u16 version | u32 models | u32 points
/// | u32 classes | string eval id | lineage records | f64 probs...
std::vector<std::uint8_t> encode_predictions(const PredictionMatrix& m);
PredictionMatrix decode_predictions(const std::vector<std::uint8_t>& bytes);
void save_predictions(const std::filesystem::path& path,
                      const PredictionMatrix& m);
PredictionMatrix load_predictions(const std::filesystem::path& path);

/// Arithmetic mean of probability vectors; renormalized only when the sum
/// drifts from 1 by more than 1e-12.
std::vector<double> mean_prediction(
    std::span<const std::span<const double>> members);
std::vector<double> mean_prediction(std::span<const Model> members,
                                    std::span<const double> x);

// Procedure-wise estimators. Models are grouped by lineage.k. Pairs are
// ordered, exclude self-pairs and exclude pairs sharing a run_id.

/// Mean over k and eligible ordered pairs of mean_x KL(f_j || f_j').
double estimate_inconsistency(const PredictionMatrix& preds);
/// Mean over ordered pairs k != k' of mean_x KL(fbar_k || fbar_k').
double estimate_instability(const PredictionMatrix& preds);
/// Pair structure of estimate_inconsistency with 1[decisions differ].
double estimate_disagreement(const PredictionMatrix& preds);

struct OneNormVariants {
  std::optional<double> inconsistency;  // C1
  std::optional<double> instability;    // S1, empty when K < 2
};
/// Squared 1-norm of output differences in place of KL. Each half is empty
/// when its pair set is.
OneNormVariants one_norm_variants(const PredictionMatrix& preds);

/// Mean over eligible peers (same k, other run) and points of
/// KL(f_peer || f_row).
double modelwise_inconsistency(const PredictionMatrix& preds, std::size_t row);
double modelwise_disagreement(const PredictionMatrix& preds, std::size_t row);

/// Convenience forms that evaluate the models first.
double estimate_inconsistency(std::span<const Model> models, const Tensor& eval);
double estimate_instability(std::span<const Model> models, const Tensor& eval);
double estimate_disagreement(std::span<const Model> models, const Tensor& eval);
OneNormVariants one_norm_variants(std::span<const Model> models,
                                  const Tensor& eval);
/// `peers` must not contain a model sharing `model`'s run.
double modelwise_inconsistency(const Model& model, std::span<const Model> peers,
                               const Tensor& eval);
double modelwise_disagreement(const Model& model, std::span<const Model> peers,
                              const Tensor& eval);

// Bound.

/// (e^l - l - 1) / l^2, with a Taylor series below 1e-4.
double psi(double lambda);

struct BoundInputs {
  double D = 0.0;      // inconsistency + instability
  double I = 0.0;      // mutual-information instability, supplied
  double n = 1.0;      // training-set size
  double gamma = 1.0;  // loss Lipschitz scale
  void validate() const;
};

struct BoundResult {
  double lambda = 0.0;
  double value = 0.0;
};

inline constexpr double kBoundLambdaMin = 1e-6;
inline constexpr double kBoundLambdaMax = 1e3;

/// gamma^2 psi(l) l D + I / (l n) for one lambda.
double bound_objective(const BoundInputs& b, double lambda);
/// Golden-section minimization of bound_objective over ln(lambda) in
/// [ln 1e-6, ln 1e3].
BoundResult bound_rhs(const BoundInputs& b);
/// 2 gamma sqrt(D I / n); requires I <= n gamma^2 D.
double simplified_bound(const BoundInputs& b);

// Loss, error and sharpness.

struct LossError {
  double loss = 0.0;
  double error = 0.0;
};

/// Mean -ln(max(p_y, 1e-12)) and mean 0/1 error of argmax decisions.
LossError eval_loss_error(const Tensor& probs,
                          std::span<const std::size_t> labels);
LossError eval_loss_error(const Model& model, const LabeledSet& data);

/// Loss of a single example i.
using ExampleLossFn =
    std::function<ad::Var(ad::Tape&, ad::Var theta, std::size_t index)>;

/// Mean over examples of phi(theta + rho g_i/|g_i|, i) - phi(theta, i);
/// examples with |g_i| < 1e-12 contribute 0.
double one_sharpness(const ExampleLossFn& loss, std::size_t num_examples,
                     const ParamVector& at, double rho);
double one_sharpness(const Model& model, const LabeledSet& data, double rho);

/// Mean per-example gradient norm (the small-rho limit of
/// one_sharpness / rho).
double mean_example_gradient_norm(const ExampleLossFn& loss,
                                  std::size_t num_examples,
                                  const ParamVector& at);
double mean_example_gradient_norm(const Model& model, const LabeledSet& data);

struct PowerIterationOptions {
  std::size_t max_iters = 200;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

/// Dominant (by magnitude, signed) Hessian eigenvalue by power iteration on
/// hvp. Throws ConvergenceError with the last Rayleigh quotient when the
/// quotient has not settled within max_iters.
double hessian_top_eigenvalue(const LossFn& loss, const ParamVector& at,
                              const PowerIterationOptions& options = {});
/// Hessian of the mean plain cross-entropy over `data`.
double hessian_top_eigenvalue(const Model& model, const LabeledSet& data,
                              const PowerIterationOptions& options = {});

/// Mean plain cross-entropy of the model over `data` as a LossFn.
LossFn mean_cross_entropy_loss(const ModelSpec& spec, const LabeledSet& data);

}  // namespace gengap
