#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gengap/data.hpp"

namespace gengap {

enum class Generator { kGaussMixture, kTwoMoons, kRings };

std::string to_string(Generator g);
Generator parse_generator(const std::string& name);

/// Synthetic classification data split into K training sets, an unlabeled
/// pool, a dev set and a test set.
struct DatasetSpec {
  Generator generator = Generator::kGaussMixture;
  std::size_t classes = 3;  // two_moons always uses 2
  std::size_t dims = 2;     // two_moons and rings always use 2
  std::uint64_t centers_seed = 0;
  double sigma = 1.0;   // gauss_mixture spread around unit-normal centers
  double noise = 0.1;   // two_moons / rings noise
  std::size_t train_size = 100;  // per training set
  std::size_t K = 1;
  std::size_t unlabeled = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
  std::uint64_t seed = 0;

  std::size_t num_classes() const;
  std::size_t num_dims() const;
  void validate() const;
};

struct DatasetBundle {
  std::size_t num_classes = 0;
  Tensor features;  // all samples
  std::vector<std::size_t> labels;
  std::vector<std::vector<std::size_t>> train_indices;  // K sets
  std::vector<std::size_t> unlabeled_indices;
  std::vector<std::size_t> dev_indices;
  std::vector<std::size_t> test_indices;

  LabeledSet train(std::size_t k) const;
  std::vector<LabeledSet> train_sets() const;
  LabeledSet dev() const;
  LabeledSet test() const;
  Tensor unlabeled() const;
};

/// Deterministic in the spec. Labels are assigned round-robin inside every
/// split, so each split is class-balanced within one example.
DatasetBundle generate_dataset(const DatasetSpec& spec);

/// "GGDS" | u16 version | u32 n | u32 dims | u32 classes | f64 features
/// | u32 labels | split index lists (u32 count + u32 indices) for K train
/// sets, unlabeled, dev, test.
std::string encode_dataset(const DatasetBundle& bundle);
DatasetBundle decode_dataset(const std::string& bytes);
void save_dataset(const std::filesystem::path& path, const DatasetBundle& bundle);
DatasetBundle load_dataset(const std::filesystem::path& path);

}  // namespace gengap
