#pragma once

// Tabular outputs: the metrics CSV, analysis scores and plot series.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gengap/analytics.hpp"
#include "gengap/config.hpp"

namespace gengap {

/// One metrics CSV row. `model` is "aggregate" for the procedure-wise row and
/// "<k>_<j>" for a model row; model rows carry model-wise inconsistency and
/// disagreement in the corresponding columns.
struct MetricRow {
  std::string procedure;
  std::string model = "aggregate";
  std::optional<std::uint64_t> k;
  std::optional<std::uint64_t> j;
  std::optional<std::uint64_t> run_id;
  std::size_t n = 0;
  std::optional<double> train_loss;
  std::optional<double> test_loss;
  std::optional<double> gap;
  std::optional<double> train_err;
  std::optional<double> test_err;
  std::optional<double> inconsistency;
  std::optional<double> instability;
  std::optional<double> D;
  std::optional<double> disagreement;
  std::optional<double> c1;
  std::optional<double> s1;
  std::optional<double> one_sharpness;
  std::optional<double> hessian_eig;
  std::optional<double> bound_lambda;
  std::optional<double> bound_value;

  bool is_aggregate() const { return model == "aggregate"; }
};

/// Header of the metrics CSV, in column order.
const std::vector<std::string>& metric_columns();
/// Names of the numeric value columns that analysis and plots may select.
const std::vector<std::string>& metric_value_columns();

/// Value of a numeric column by name; throws ConfigError for unknown names.
std::optional<double> metric_value(const MetricRow& row, const std::string& column);

/// Doubles are written with 17 significant digits; missing values are empty.
std::string format_metrics_csv(std::span<const MetricRow> rows);
/// Throws FormatError when the header differs from metric_columns().
std::vector<MetricRow> parse_metrics_csv(const std::string& text);

struct ScoreRow {
  std::string quantity;
  std::string target;
  std::size_t procedures = 0;
  std::optional<double> tau;
  std::vector<std::string> axis_names;
  std::vector<std::optional<double>> psi_per_axis;
  std::optional<double> Psi;
  std::optional<double> kappa;
  std::optional<double> kappa_s0;
  std::optional<double> loo_error;
  /// Reasons for any score left empty.
  std::vector<std::string> notes;
};

/// Scores `quantity` against `target` over the aggregate rows of the
/// procedures listed in `axes`. Procedures with a missing value, or with mean
/// training loss above `trainloss_cutoff`, are left out. Scores that cannot
/// be computed stay empty with a note.
ScoreRow score_quantity(const AxesSpec& axes, std::span<const MetricRow> rows,
                        const std::string& quantity, const std::string& target,
                        std::size_t max_condition_size,
                        std::optional<double> trainloss_cutoff = std::nullopt);

std::string format_scores_csv(std::span<const ScoreRow> rows);

struct PlotFamily {
  std::string file;  // base name without extension
  std::string x;
  std::string y;
};
const std::vector<PlotFamily>& plot_families();

/// Tab-separated "procedure<TAB>x<TAB>y" series for one family, one line per
/// aggregate row with both values present.
std::string format_plot_series(const PlotFamily& family,
                               std::span<const MetricRow> rows);
/// Writes every family to <dir>/<file>.tsv and returns the paths.
std::vector<std::filesystem::path> write_plots(const std::filesystem::path& dir,
                                               std::span<const MetricRow> rows);

}  // namespace gengap
