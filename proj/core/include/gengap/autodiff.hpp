#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation applied to Vars created on it. Nodes are
// appended in creation order, so walking the node list backwards is a valid
// reverse topological order; backward() relies on that.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gengap/tensor.hpp"

namespace gengap::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the Tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  double item() const { return value().item(); }
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A leaf whose gradient is tracked.
  Var variable(Tensor value);
  /// A leaf that never receives a gradient.
  Var constant(Tensor value);

  /// Appends an operation node. `backward` is dropped when no parent needs
  /// a gradient.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node. Returns the
  /// number of nodes whose backward function ran.
  std::size_t backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient accumulated at `id`; zeros if nothing flowed there.
  const Tensor& grad(Var v);
  /// Mutable gradient buffer for use inside backward functions.
  Tensor& grad_buffer(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Elementwise and reduction ops. Binary ops require equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var square(Var a);
Var exp(Var a);
Var log(Var a);
Var relu(Var a);
Var tanh(Var a);
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

/// Same data, new shape.
Var reshape(Var a, Shape shape);
/// Copy of `count` consecutive elements starting at `offset`, reshaped.
Var slice(Var flat, std::size_t offset, Shape shape);

/// (n x k) * (k x m).
Var matmul(Var a, Var b);
/// (n x k) * (k x m) with a constant left operand.
Var matmul(const Tensor& a, Var b);
/// (n x m) + broadcast bias (m).
Var add_rowwise(Var a, Var bias);

/// Mean over rows of smoothed cross-entropy between softmax(logits) and
/// targets (1 - smoothing) * onehot(label) + smoothing / C.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels,
                          double smoothing = 0.0);

/// sum_r weights[r] * KL(target_r || softmax(logits_r)); `target` rows are
/// held constant. Computed in log-space, so no probability clamp applies.
Var softmax_kl_from_target(const Tensor& target, Var logits,
                           std::span<const double> row_weights);

}  // namespace gengap::ad

namespace gengap {

/// Scalar objective built on a fresh tape from the flat parameter Var.
using LossFn = std::function<ad::Var(ad::Tape&, ad::Var theta)>;

/// Loss value and exact reverse-mode gradient at `at`. Throws
/// NumericInputError when the forward pass is not finite.
std::pair<double, ParamVector> value_and_gradient(const LossFn& loss,
                                                  const ParamVector& at);
ParamVector gradient(const LossFn& loss, const ParamVector& at);

/// Hessian-vector product by central differences of exact gradients with
/// step 1e-6 * (1 + |at|_inf) / |v|_inf. The small step keeps the probe from
/// straddling ReLU kinks, which otherwise read as spurious curvature.
ParamVector hvp(const LossFn& loss, const ParamVector& at, const ParamVector& v);

/// Central finite-difference gradient with per-coordinate step
/// `rel_step * (1 + |theta_i|)`. Intended for validation.
ParamVector finite_difference_gradient(const LossFn& loss,
                                       const ParamVector& at,
                                       double rel_step = 1e-5);

/// Evaluates the loss without recording a backward pass.
double evaluate(const LossFn& loss, const ParamVector& at);

}  // namespace gengap
