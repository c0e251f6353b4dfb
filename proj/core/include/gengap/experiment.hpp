#pragma once

// Config-driven orchestration: data generation, grid training, measurement,
// analysis and plot series, all persisted under one output directory.

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gengap/config.hpp"
#include "gengap/dataset.hpp"
#include "gengap/report.hpp"

namespace gengap {

/// out/{manifest.json, data/, ckpt/<proc>/<k>_<j>.ggap, pred/, metrics.csv,
/// analysis/*.csv, plots/*.tsv}
struct ExperimentLayout {
  std::filesystem::path root;

  explicit ExperimentLayout(std::filesystem::path r) : root(std::move(r)) {}
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path dataset() const { return root / "data" / "dataset.bin"; }
  std::filesystem::path dataset_spec() const { return root / "data" / "spec.json"; }
  std::filesystem::path checkpoints(const std::string& proc) const {
    return root / "ckpt" / proc;
  }
  std::filesystem::path predictions(const std::string& proc,
                                    const std::string& split) const {
    return root / "pred" / (proc + "." + split + ".ggpm");
  }
  std::filesystem::path metrics() const { return root / "metrics.csv"; }
  std::filesystem::path scores() const { return root / "analysis" / "scores.csv"; }
  std::filesystem::path axes() const { return root / "analysis" / "axes.json"; }
  std::filesystem::path plots() const { return root / "plots"; }
};

struct StepOptions {
  std::size_t jobs = 1;
  /// Progress lines; silent when null.
  std::ostream* log = nullptr;
};

/// Outcome of a step. Failures name the cells (or procedures) that did not
/// complete; other work still ran.
struct StepResult {
  std::size_t cells = 0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
  void merge(const StepResult& other);
};

/// Generates the dataset and writes data/dataset.bin and data/spec.json.
DatasetBundle gen_data(const ExperimentConfig& config, const std::filesystem::path& out);
/// Loads the stored dataset when its spec matches, else generates it.
DatasetBundle ensure_dataset(const ExperimentConfig& config,
                             const std::filesystem::path& out);

/// Trains every procedure's K x J grid, resuming from valid checkpoints.
/// Checkpoints written under a different procedure spec, dataset or J are
/// discarded first.
StepResult train_step(const ExperimentConfig& config, const std::filesystem::path& out,
                      const StepOptions& options = {});

/// Loads checkpoints, writes prediction matrices and metrics.csv.
StepResult measure_step(const ExperimentConfig& config,
                        const std::filesystem::path& out,
                        const StepOptions& options = {});

/// Computes the metric rows without writing anything.
std::vector<MetricRow> compute_metrics(const ExperimentConfig& config,
                                       const DatasetBundle& data,
                                       const std::filesystem::path& out,
                                       const StepOptions& options, StepResult& result);

/// Scores every configured (quantity, target) pair.
std::vector<ScoreRow> analyze_metrics(const AxesSpec& axes,
                                      std::span<const MetricRow> rows,
                                      const AnalysisOptions& options);

/// Reads metrics.csv and writes analysis/scores.csv and analysis/axes.json.
StepResult analyze_step(const ExperimentConfig& config,
                        const std::filesystem::path& out);

/// Reads metrics.csv and writes plots/*.tsv.
StepResult report_step(const std::filesystem::path& out);

/// All steps in order. Config errors throw before any training.
StepResult run_experiment(const ExperimentConfig& config,
                          const std::filesystem::path& out,
                          const StepOptions& options = {});

}  // namespace gengap
