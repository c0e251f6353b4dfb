#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gengap/tensor.hpp"

namespace gengap {

/// Feature rows with integer class labels.
struct LabeledSet {
  Tensor features;  // n x d
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return features.cols(); }
  bool empty() const { return labels.empty(); }

  LabeledSet subset(std::span<const std::size_t> indices) const {
    LabeledSet out;
    out.features = features.gather_rows(indices);
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels[i]);
    return out;
  }
};

}  // namespace gengap
