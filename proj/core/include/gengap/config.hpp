#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gengap/analytics.hpp"
#include "gengap/dataset.hpp"
#include "gengap/metrics.hpp"
#include "gengap/training.hpp"

namespace gengap {

struct ProcedureEntry {
  ProcedureSpec spec;
  /// One value per declared axis, in axis order.
  std::vector<std::string> assignment;
};

struct MetricsOptions {
  /// Radius for 1-sharpness; the column stays empty when unset.
  std::optional<double> sharpness_rho;
  bool hessian = false;
  PowerIterationOptions power_iteration;
  /// Supplied mutual-information instability; bound columns stay empty when
  /// unset.
  std::optional<double> info;
  double gamma = 1.0;
};

struct AnalysisOptions {
  std::vector<std::string> quantities = {"inconsistency", "disagreement", "D"};
  std::vector<std::string> targets = {"gap"};
  /// Largest conditioning set for the MI score; clamped to (#axes - 1).
  std::size_t max_condition_size = 2;
  /// Procedures with mean training loss above this are left out of the
  /// analysis. No default.
  std::optional<double> trainloss_cutoff;
};

struct ExperimentConfig {
  std::string name;
  DatasetSpec dataset;
  std::size_t J = 2;
  std::vector<Axis> axes;
  std::vector<ProcedureEntry> procedures;
  MetricsOptions metrics;
  AnalysisOptions analysis;

  void validate() const;
  const ProcedureEntry* find(const std::string& name) const;
};

/// Parses the JSON experiment description. Procedures come from an optional
/// "sweep" (Cartesian product of per-axis JSON patches applied on top of the
/// "procedure" defaults) and an optional explicit "procedures" list.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Replaces the dataset seed and every procedure's base seed.
void apply_seed_override(ExperimentConfig& config, std::uint64_t seed);

/// Canonical JSON echo of a procedure (stable key order).
std::string procedure_to_json(const ProcedureSpec& proc);
std::string dataset_to_json(const DatasetSpec& spec);

/// Axis declarations plus per-procedure assignments, as written to
/// analysis/axes.json and read by `gengap analyze --axes`.
struct AxesSpec {
  std::vector<Axis> axes;
  std::vector<std::pair<std::string, std::vector<std::string>>> assignments;
};
AxesSpec axes_of(const ExperimentConfig& config);
std::string axes_to_json(const AxesSpec& axes);
/// Accepts either an axes file or a full experiment config.
AxesSpec parse_axes(const std::string& json_text);

}  // namespace gengap
