#include "gengap/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gengap/errors.hpp"

namespace gengap::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> parents,
                 BackwardFn backward) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape_ != this) throw ShapeError("operands live on different tapes");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  Node node{std::move(value), {}, {}, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.size() != node.value.size()) {
    node.grad = Tensor(node.value.shape(),
                       std::vector<double>(node.value.size(), 0.0));
  }
  return node.grad;
}

const Tensor& Tape::grad(Var v) { return grad_buffer(v.id_); }

std::size_t Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ShapeError("loss lives on a different tape");
  if (value(loss.id_).size() != 1) {
    throw ShapeError("backward() requires a scalar loss");
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id_)[0] = 1.0;
  std::size_t visited = 0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.backward || node.grad.size() == 0) continue;
    node.backward(*this, i);
    ++visited;
  }
  return visited;
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shapes {} and {} differ", op,
                                 shape_string(a.shape()),
                                 shape_string(b.shape())));
  }
}

// Applies f elementwise and records df/dx as a saved tensor.
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  const auto& x = a.value();
  Tensor out(x.shape(), std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const auto ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents,
                         [ia, df](Tape& t, std::size_t self) {
                           const auto& g = t.grad_buffer(self);
                           const auto& xv = t.value(ia);
                           const auto& yv = t.value(self);
                           auto& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] += g[i] * df(xv[i], yv[i]);
                           }
                         });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return a.tape().record(std::move(out), parents,
                         [ia, ib](Tape& t, std::size_t self) {
                           const auto& g = t.grad_buffer(self);
                           for (auto id : {ia, ib}) {
                             if (!t.requires_grad(id)) continue;
                             auto& gp = t.grad_buffer(id);
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               gp[i] += g[i];
                             }
                           }
                         });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return a.tape().record(
      std::move(out), parents, [ia, ib](Tape& t, std::size_t self) {
        const auto& g = t.grad_buffer(self);
        if (t.requires_grad(ia)) {
          auto& ga = t.grad_buffer(ia);
          const auto& bv = t.value(ib);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          const auto& av = t.value(ia);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      });
}

Var scale(Var a, double c) {
  return unary(
      a, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const auto ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(Tensor::scalar(s), parents,
                         [ia](Tape& t, std::size_t self) {
                           const double g = t.grad_buffer(self)[0];
                           auto& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < ga.size(); ++i) {
                             ga[i] += g;
                           }
                         });
}

Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents,
                         [ia](Tape& t, std::size_t self) {
                           const auto& g = t.grad_buffer(self);
                           auto& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] += g[i];
                           }
                         });
}

Var slice(Var flat, std::size_t offset, Shape shape) {
  const auto count = shape_size(shape);
  const auto& src = flat.value();
  if (offset + count > src.size()) {
    throw ShapeError(fmt::format("slice [{}, {}) exceeds {} elements", offset,
                                 offset + count, src.size()));
  }
  std::vector<double> data(src.data().begin() + offset,
                           src.data().begin() + offset + count);
  const auto ia = flat.id();
  const Var parents[] = {flat};
  return flat.tape().record(Tensor(std::move(shape), std::move(data)), parents,
                            [ia, offset](Tape& t, std::size_t self) {
                              const auto& g = t.grad_buffer(self);
                              auto& ga = t.grad_buffer(ia);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                ga[offset + i] += g[i];
                              }
                            });
}

namespace {

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul: incompatible shapes {} and {}",
                                 shape_string(a.shape()),
                                 shape_string(b.shape())));
  }
  const auto n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    auto orow = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      if (av == 0.0) continue;
      auto brow = b.row(p);
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// ga += g * b^T
void accumulate_grad_lhs(Tensor& ga, const Tensor& g, const Tensor& b) {
  const auto n = g.rows(), m = g.cols(), k = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    auto grow = g.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      auto brow = b.row(p);
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
      ga.at(i, p) += s;
    }
  }
}

// gb += a^T * g
void accumulate_grad_rhs(Tensor& gb, const Tensor& a, const Tensor& g) {
  const auto n = a.rows(), k = a.cols(), m = g.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto grow = g.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      if (av == 0.0) continue;
      auto gbrow = gb.row(p);
      for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tensor out = matmul_values(a.value(), b.value());
  const auto ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return a.tape().record(std::move(out), parents,
                         [ia, ib](Tape& t, std::size_t self) {
                           const auto& g = t.grad_buffer(self);
                           if (t.requires_grad(ia)) {
                             accumulate_grad_lhs(t.grad_buffer(ia), g,
                                                 t.value(ib));
                           }
                           if (t.requires_grad(ib)) {
                             accumulate_grad_rhs(t.grad_buffer(ib), t.value(ia),
                                                 g);
                           }
                         });
}

Var matmul(const Tensor& a, Var b) {
  return matmul(b.tape().constant(a), b);
}

Var add_rowwise(Var a, Var bias) {
  const auto& av = a.value();
  const auto& bv = bias.value();
  if (av.rank() != 2 || bv.size() != av.cols()) {
    throw ShapeError(fmt::format("add_rowwise: shapes {} and {}",
                                 shape_string(av.shape()),
                                 shape_string(bv.shape())));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv[j];
  }
  const auto ia = a.id(), ib = bias.id();
  const Var parents[] = {a, bias};
  return a.tape().record(std::move(out), parents,
                         [ia, ib](Tape& t, std::size_t self) {
                           const auto& g = t.grad_buffer(self);
                           if (t.requires_grad(ia)) {
                             auto& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               ga[i] += g[i];
                             }
                           }
                           if (t.requires_grad(ib)) {
                             auto& gb = t.grad_buffer(ib);
                             const auto m = gb.size();
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               gb[i % m] += g[i];
                             }
                           }
                         });
}

namespace {

// Row-wise softmax probabilities and log-partition of a rank-2 tensor.
void softmax_rows(const Tensor& logits, Tensor& probs,
                  std::vector<double>& log_z) {
  const auto n = logits.rows(), c = logits.cols();
  probs = Tensor({n, c});
  log_z.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = logits.row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    auto p = probs.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(z[j] - mx);
      s += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] /= s;
    log_z[i] = mx + std::log(s);
  }
}

}  // namespace

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels,
                          double smoothing) {
  const auto& z = logits.value();
  if (z.rank() != 2 || z.rows() != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits must be (batch x classes)");
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw DomainError("label smoothing must lie in [0, 1)");
  }
  const auto n = z.rows(), c = z.cols();
  Tensor probs;
  std::vector<double> log_z;
  softmax_rows(z, probs, log_z);
  // targets t = (1-s) onehot + s/C; loss_i = -sum_j t_j (z_j - logZ)
  Tensor targets({n, c});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) throw DomainError("label out of range");
    auto t = targets.row(i);
    auto zr = z.row(i);
    double li = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      t[j] = smoothing / static_cast<double>(c) +
             (j == labels[i] ? 1.0 - smoothing : 0.0);
      li -= t[j] * (zr[j] - log_z[i]);
    }
    total += li;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto iz = logits.id();
  const Var parents[] = {logits};
  return logits.tape().record(
      Tensor::scalar(total * inv_n), parents,
      [iz, probs = std::move(probs), targets = std::move(targets), inv_n](
          Tape& t, std::size_t self) {
        const double g = t.grad_buffer(self)[0] * inv_n;
        auto& gz = t.grad_buffer(iz);
        for (std::size_t i = 0; i < gz.size(); ++i) {
          gz[i] += g * (probs[i] - targets[i]);
        }
      });
}

Var softmax_kl_from_target(const Tensor& target, Var logits,
                           std::span<const double> row_weights) {
  const auto& z = logits.value();
  if (z.rank() != 2 || target.shape() != z.shape() ||
      row_weights.size() != z.rows()) {
    throw ShapeError("softmax_kl_from_target: shape mismatch");
  }
  const auto n = z.rows(), c = z.cols();
  Tensor probs;
  std::vector<double> log_z;
  softmax_rows(z, probs, log_z);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (row_weights[i] == 0.0) continue;
    auto p = target.row(i);
    auto zr = z.row(i);
    double kl = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - (zr[j] - log_z[i]));
    }
    total += row_weights[i] * kl;
  }
  std::vector<double> weights(row_weights.begin(), row_weights.end());
  const auto iz = logits.id();
  const Var parents[] = {logits};
  return logits.tape().record(
      Tensor::scalar(total), parents,
      [iz, probs = std::move(probs), target, weights = std::move(weights)](
          Tape& t, std::size_t self) {
        const double g = t.grad_buffer(self)[0];
        auto& gz = t.grad_buffer(iz);
        const auto c = target.cols();
        for (std::size_t i = 0; i < weights.size(); ++i) {
          if (weights[i] == 0.0) continue;
          const double w = g * weights[i];
          for (std::size_t j = 0; j < c; ++j) {
            gz[i * c + j] += w * (probs[i * c + j] - target[i * c + j]);
          }
        }
      });
}

}  // namespace gengap::ad

namespace gengap {

std::pair<double, ParamVector> value_and_gradient(const LossFn& loss,
                                                  const ParamVector& at) {
  ad::Tape tape;
  auto theta = tape.variable(Tensor::vector(
      std::vector<double>(at.values().begin(), at.values().end())));
  auto out = loss(tape, theta);
  const double value = out.item();
  if (!std::isfinite(value)) {
    throw NumericInputError("loss is not finite in the forward pass");
  }
  tape.backward(out);
  const auto& g = tape.grad(theta);
  return {value, ParamVector(at.layout(), g.storage())};
}

ParamVector gradient(const LossFn& loss, const ParamVector& at) {
  return value_and_gradient(loss, at).second;
}

double evaluate(const LossFn& loss, const ParamVector& at) {
  ad::Tape tape;
  auto theta = tape.constant(Tensor::vector(
      std::vector<double>(at.values().begin(), at.values().end())));
  return loss(tape, theta).item();
}

ParamVector hvp(const LossFn& loss, const ParamVector& at,
                const ParamVector& v) {
  require_same_layout(at, v, "hvp");
  const double vinf = v.norm_inf();
  if (vinf == 0.0) throw DomainError("hvp: direction vector is zero");
  const double eps = 1e-6 * (1.0 + at.norm_inf()) / vinf;
  ParamVector plus = at, minus = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    plus[i] += eps * v[i];
    minus[i] -= eps * v[i];
  }
  auto gp = gradient(loss, plus);
  auto gm = gradient(loss, minus);
  for (std::size_t i = 0; i < gp.size(); ++i) {
    gp[i] = (gp[i] - gm[i]) / (2.0 * eps);
  }
  return gp;
}

ParamVector finite_difference_gradient(const LossFn& loss,
                                       const ParamVector& at,
                                       double rel_step) {
  ParamVector out = at.zeros_like();
  ParamVector probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double h = rel_step * (1.0 + std::abs(at[i]));
    probe[i] = at[i] + h;
    const double fp = evaluate(loss, probe);
    probe[i] = at[i] - h;
    const double fm = evaluate(loss, probe);
    probe[i] = at[i];
    out[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

}  // namespace gengap
