#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gengap {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double item() const;
  bool all_finite() const;
  Tensor reshaped(Shape shape) const;

  /// Gathers rows `indices` of a rank-2 tensor.
  Tensor gather_rows(std::span<const std::size_t> indices) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// One named block of a flat parameter array.
struct Segment {
  std::string name;
  Shape shape;
  std::size_t offset = 0;

  std::size_t size() const { return shape_size(shape); }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Flat parameter array with an explicit segment table. Segments tile the
/// array in order with no gaps.
class ParamVector {
 public:
  ParamVector() = default;
  /// Builds a zero vector from (name, shape) pairs; offsets are assigned.
  explicit ParamVector(std::vector<Segment> layout);
  /// Takes ownership of `values`; the layout offsets must tile them exactly.
  ParamVector(std::vector<Segment> layout, std::vector<double> values);

  /// A single-segment vector named "theta".
  static ParamVector flat(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<Segment>& layout() const noexcept { return layout_; }
  const Segment& segment(const std::string& name) const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values(const Segment& seg) {
    return std::span<double>(values_).subspan(seg.offset, seg.size());
  }
  std::span<const double> values(const Segment& seg) const {
    return std::span<const double>(values_).subspan(seg.offset, seg.size());
  }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool same_layout(const ParamVector& other) const {
    return layout_ == other.layout_;
  }
  ParamVector zeros_like() const;

  double norm2() const;
  double norm_inf() const;
  bool all_finite() const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<Segment> layout_;
  std::vector<double> values_;
};

/// Throws ShapeError unless both vectors share a layout.
void require_same_layout(const ParamVector& a, const ParamVector& b,
                         const char* context);

}  // namespace gengap
