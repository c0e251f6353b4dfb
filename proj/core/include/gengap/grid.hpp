#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gengap/data.hpp"
#include "gengap/model.hpp"
#include "gengap/training.hpp"

namespace gengap {

/// One training run inside a grid. Paired objectives produce two models
/// (replicates j and j + 1) per run.
struct RunInfo {
  std::uint32_t k = 0;
  std::vector<std::uint32_t> replicates;
  std::uint64_t run_id = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> stream_seeds;
  std::vector<std::vector<EpochStats>> curves;
  std::vector<std::filesystem::path> checkpoints;
  double wall_seconds = 0.0;
  bool resumed = false;
  std::optional<std::string> error;
};

struct ModelGrid {
  std::string procedure;
  std::size_t K = 0;
  std::size_t J = 0;
  /// Successfully trained models ordered by (k, j).
  std::vector<Model> models;
  std::vector<RunInfo> runs;

  bool complete() const { return models.size() == K * J; }
  std::vector<std::string> failures() const;
  /// Models trained on training set k.
  std::vector<Model> group(std::uint32_t k) const;
};

struct GridOptions {
  std::size_t jobs = 1;
  /// When set, each finished run is checkpointed as <dir>/<k>_<j>.ggap and
  /// runs whose checkpoints already load are skipped.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Required by semi_consist procedures.
  const Tensor* unlabeled = nullptr;
  /// Teacher for distill procedures; defaults to loading the objective's
  /// teacher path.
  std::function<Model(std::uint32_t k, std::uint32_t j)> teacher;
};

/// Sub-seed of run (k, j): derive_seed(base_seed, k, j, kCell).
std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t k, std::size_t j);

/// Trains K x J models. Per-run failures are recorded in RunInfo::error and
/// do not stop other runs.
ModelGrid train_grid(const ProcedureSpec& proc,
                     std::span<const LabeledSet> train_sets, std::size_t J,
                     const GridOptions& options = {});

/// Throws Error naming every failed cell.
void require_complete(const ModelGrid& grid);

}  // namespace gengap
