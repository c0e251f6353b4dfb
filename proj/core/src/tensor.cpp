#include "gengap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "gengap/errors.hpp"

namespace gengap {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, ","));
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
  data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError(fmt::format("shape {} does not match {} values",
                                 shape_string(shape_), data_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() requires a rank-2 tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() requires a rank-2 tensor");
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const auto c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const auto c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() requires a single element");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  const auto c = cols();
  std::vector<double> out;
  out.reserve(indices.size() * c);
  for (auto i : indices) {
    if (i >= shape_[0]) throw ShapeError("gather_rows index out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor({indices.size(), c}, std::move(out));
}

namespace {

std::vector<Segment> assign_offsets(std::vector<Segment> layout) {
  std::size_t offset = 0;
  for (auto& seg : layout) {
    seg.offset = offset;
    offset += seg.size();
  }
  return layout;
}

}  // namespace

ParamVector::ParamVector(std::vector<Segment> layout)
    : layout_(assign_offsets(std::move(layout))) {
  std::size_t total = 0;
  for (const auto& seg : layout_) total += seg.size();
  values_.assign(total, 0.0);
}

ParamVector::ParamVector(std::vector<Segment> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  std::size_t expected = 0;
  for (const auto& seg : layout_) {
    if (seg.offset != expected) {
      throw ShapeError(fmt::format(
          "segment '{}' starts at {} but the previous segment ends at {}",
          seg.name, seg.offset, expected));
    }
    expected += seg.size();
  }
  if (expected != values_.size()) {
    throw ShapeError(fmt::format("layout covers {} values but {} were given",
                                 expected, values_.size()));
  }
}

ParamVector ParamVector::flat(std::vector<double> values) {
  std::vector<Segment> layout{{"theta", {values.size()}, 0}};
  return ParamVector(std::move(layout), std::move(values));
}

const Segment& ParamVector::segment(const std::string& name) const {
  for (const auto& seg : layout_) {
    if (seg.name == name) return seg;
  }
  throw ShapeError(fmt::format("no segment named '{}'", name));
}

ParamVector ParamVector::zeros_like() const {
  return ParamVector(layout_, std::vector<double>(values_.size(), 0.0));
}

double ParamVector::norm2() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

double ParamVector::norm_inf() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

bool ParamVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void require_same_layout(const ParamVector& a, const ParamVector& b,
                         const char* context) {
  if (!a.same_layout(b)) {
    throw ShapeError(fmt::format("{}: parameter layouts differ", context));
  }
}

}  // namespace gengap
