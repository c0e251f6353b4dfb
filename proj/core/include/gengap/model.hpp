#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gengap/autodiff.hpp"
#include "gengap/tensor.hpp"

namespace gengap {

enum class Activation : std::uint8_t { kRelu = 0, kTanh = 1 };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct HiddenLayer {
  std::size_t width = 0;
  Activation activation = Activation::kRelu;
  friend bool operator==(const HiddenLayer&, const HiddenLayer&) = default;
};

/// Fully connected classifier: input -> hidden... -> logits.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<HiddenLayer> hidden;
  std::size_t num_classes = 2;

  /// Segments W0, b0, W1, b1, ... with W_l shaped (in, out).
  std::vector<Segment> layout() const;
  std::size_t param_count() const;
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Where a trained model came from inside a grid.
struct Lineage {
  std::string procedure;
  std::uint32_t k = 0;
  std::uint32_t j = 0;
  std::uint64_t run_id = 0;
  friend bool operator==(const Lineage&, const Lineage&) = default;
};

struct Model {
  ModelSpec spec;
  ParamVector params;
  Lineage lineage;
};

/// Glorot-uniform weights, zero biases, drawn from the counter stream of
/// `seed`. Equal seeds give identical bits.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Logits for every row of `x` (n x input_dim).
Tensor forward_logits(const ModelSpec& spec, const ParamVector& params,
                      const Tensor& x);

/// Same computation recorded on a tape; `theta` is the flat parameter Var.
ad::Var forward_logits(ad::Tape& tape, const ModelSpec& spec, ad::Var theta,
                       const Tensor& x);

/// Row-wise softmax of the logits.
Tensor predict_proba(const Model& model, const Tensor& x);
std::vector<double> predict_proba(const Model& model,
                                  std::span<const double> x);

std::size_t decide(const Model& model, std::span<const double> x);
std::vector<std::size_t> decide(const Model& model, const Tensor& x);

/// Softmax of the mean member logits. Members must share a spec.
std::vector<double> ensemble_predict(std::span<const Model> models,
                                     std::span<const double> x);
Tensor ensemble_predict(std::span<const Model> models, const Tensor& x);

/// Row-wise softmax of a logits matrix.
Tensor softmax_rows(const Tensor& logits);

}  // namespace gengap
