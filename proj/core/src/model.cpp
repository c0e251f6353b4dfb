#include "gengap/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gengap/errors.hpp"
#include "gengap/numerics.hpp"
#include "gengap/rng.hpp"

namespace gengap {

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw DomainError(fmt::format("unknown activation '{}'", name));
}

std::vector<Segment> ModelSpec::layout() const {
  std::vector<Segment> segs;
  std::size_t in = input_dim;
  std::size_t layer = 0;
  auto add_layer = [&](std::size_t out) {
    segs.push_back({fmt::format("W{}", layer), {in, out}, 0});
    segs.push_back({fmt::format("b{}", layer), {out}, 0});
    in = out;
    ++layer;
  };
  for (const auto& h : hidden) add_layer(h.width);
  add_layer(num_classes);
  std::size_t offset = 0;
  for (auto& s : segs) {
    s.offset = offset;
    offset += s.size();
  }
  return segs;
}

std::size_t ModelSpec::param_count() const {
  std::size_t total = 0;
  std::size_t in = input_dim;
  for (const auto& h : hidden) {
    total += (in + 1) * h.width;
    in = h.width;
  }
  return total + (in + 1) * num_classes;
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw DomainError("model input_dim must be positive");
  if (num_classes < 2) throw DomainError("model needs at least two classes");
  for (const auto& h : hidden) {
    if (h.width == 0) throw DomainError("hidden layer width must be positive");
  }
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector params(spec.layout());
  const auto key = derive_seed(seed, SeedRole::kInit);
  std::uint64_t counter = 0;
  for (const auto& seg : params.layout()) {
    auto vals = params.values(seg);
    if (seg.shape.size() != 2) {
      counter += vals.size();
      continue;  // biases stay zero
    }
    const double limit =
        std::sqrt(6.0 / static_cast<double>(seg.shape[0] + seg.shape[1]));
    for (auto& v : vals) {
      v = limit * (2.0 * counter_uniform(key, counter++) - 1.0);
    }
  }
  return params;
}

namespace {

void apply_activation(Tensor& t, Activation a) {
  for (auto& v : t.data()) {
    v = a == Activation::kRelu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
  }
}

void check_input(const ModelSpec& spec, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != spec.input_dim) {
    throw ShapeError(fmt::format("model expects inputs of width {}, got {}",
                                 spec.input_dim, shape_string(x.shape())));
  }
}

}  // namespace

Tensor forward_logits(const ModelSpec& spec, const ParamVector& params,
                      const Tensor& x) {
  check_input(spec, x);
  if (params.size() != spec.param_count()) {
    throw ShapeError("parameter count does not match the model spec");
  }
  const auto layout = spec.layout();
  Tensor h = x;
  const auto layers = spec.hidden.size() + 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& wseg = layout[2 * l];
    const auto& bseg = layout[2 * l + 1];
    const auto in = wseg.shape[0], out = wseg.shape[1];
    auto w = params.values(wseg);
    auto b = params.values(bseg);
    Tensor next({h.rows(), out});
    for (std::size_t r = 0; r < h.rows(); ++r) {
      auto hr = h.row(r);
      auto nr = next.row(r);
      for (std::size_t o = 0; o < out; ++o) nr[o] = b[o];
      for (std::size_t i = 0; i < in; ++i) {
        const double hv = hr[i];
        if (hv == 0.0) continue;
        const double* wr = w.data() + i * out;
        for (std::size_t o = 0; o < out; ++o) nr[o] += hv * wr[o];
      }
    }
    if (l < spec.hidden.size()) apply_activation(next, spec.hidden[l].activation);
    h = std::move(next);
  }
  return h;
}

ad::Var forward_logits(ad::Tape& tape, const ModelSpec& spec, ad::Var theta,
                       const Tensor& x) {
  check_input(spec, x);
  if (theta.value().size() != spec.param_count()) {
    throw ShapeError("parameter count does not match the model spec");
  }
  const auto layout = spec.layout();
  ad::Var h = tape.constant(x);
  const auto layers = spec.hidden.size() + 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& wseg = layout[2 * l];
    const auto& bseg = layout[2 * l + 1];
    auto w = ad::slice(theta, wseg.offset, wseg.shape);
    auto b = ad::slice(theta, bseg.offset, bseg.shape);
    h = ad::add_rowwise(ad::matmul(h, w), b);
    if (l < spec.hidden.size()) {
      h = spec.hidden[l].activation == Activation::kRelu ? ad::relu(h)
                                                         : ad::tanh(h);
    }
  }
  return h;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

Tensor predict_proba(const Model& model, const Tensor& x) {
  return softmax_rows(forward_logits(model.spec, model.params, x));
}

std::vector<double> predict_proba(const Model& model,
                                  std::span<const double> x) {
  Tensor xt({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  auto p = predict_proba(model, xt);
  return p.storage();
}

std::size_t decide(const Model& model, std::span<const double> x) {
  return argmax(predict_proba(model, x));
}

std::vector<std::size_t> decide(const Model& model, const Tensor& x) {
  auto p = predict_proba(model, x);
  std::vector<std::size_t> out(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) out[r] = argmax(p.row(r));
  return out;
}

Tensor ensemble_predict(std::span<const Model> models, const Tensor& x) {
  if (models.size() < 2) {
    throw DomainError("an ensemble needs at least two members");
  }
  for (const auto& m : models) {
    if (!(m.spec == models[0].spec)) {
      throw ShapeError("ensemble members have different model specs");
    }
  }
  Tensor mean = forward_logits(models[0].spec, models[0].params, x);
  for (std::size_t m = 1; m < models.size(); ++m) {
    auto z = forward_logits(models[m].spec, models[m].params, x);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += z[i];
  }
  const auto count = static_cast<double>(models.size());
  for (auto& v : mean.data()) v /= count;
  return softmax_rows(mean);
}

std::vector<double> ensemble_predict(std::span<const Model> models,
                                     std::span<const double> x) {
  Tensor xt({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  return ensemble_predict(models, xt).storage();
}

}  // namespace gengap
