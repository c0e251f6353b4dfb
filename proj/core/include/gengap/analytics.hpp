#pragma once

// Scores for how well a measured quantity ranks or predicts the
// generalization gap across a family of training procedures.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gengap {

struct Axis {
  std::string name;
  std::vector<std::string> values;  // declared categorical values
};

struct ProcedureRow {
  std::string id;
  std::vector<std::string> assignment;  // one value per axis, in axis order
  double mu = 0.0;                      // measured quantity
  double g = 0.0;                       // generalization gap (or target)
};

class ProcedureTable {
 public:
  ProcedureTable() = default;
  explicit ProcedureTable(std::vector<Axis> axes) : axes_(std::move(axes)) {}

  /// Throws DomainError on duplicate ids, wrong arity or undeclared values.
  void add(ProcedureRow row);

  const std::vector<Axis>& axes() const { return axes_; }
  const std::vector<ProcedureRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<Axis> axes_;
  std::vector<ProcedureRow> rows_;
};

struct StandardizedSeries {
  std::vector<double> values;
  double mean = 0.0;
  double stdev = 0.0;  // population
};

/// (v - mean) / stdev with the population standard deviation.
StandardizedSeries standardize(std::span<const double> values);

/// Kendall tau over ordered distinct pairs; ties contribute 0.
double kendall_tau(std::span<const std::pair<double, double>> pairs);
double kendall_tau(std::span<const double> mu, std::span<const double> g);

struct GranulatedKendall {
  double Psi = 0.0;
  /// psi_i per axis; empty when every slice along the axis was undefined.
  std::vector<std::optional<double>> per_axis;
};

/// Requires the full Cartesian product of declared axis values (throws
/// DomainError listing missing cells). Slices with fewer than two rows, or
/// with all mu or all g equal, are skipped.
GranulatedKendall granulated_kendall(const ProcedureTable& table);

struct KappaScore {
  std::vector<std::size_t> condition;  // axis indices in S
  double score = 0.0;                  // I(V_mu, V_g | U_S) / H(V_g | U_S)
};

struct MiKappa {
  double kappa = 0.0;     // min over all evaluated S
  double kappa_s0 = 0.0;  // S = {}
  std::vector<KappaScore> per_condition;
};

/// Conditional-MI ranking score over all ordered pairs of distinct
/// procedures, conditioning sets up to `max_condition_size` axes.
MiKappa mi_kappa(const ProcedureTable& table, std::size_t max_condition_size = 2);

/// Both series are standardized, then for each i a least-squares line is fit
/// on the other points and |prediction - y_i| is averaged.
double loo_linear_prediction_error(std::span<const double> x,
                                   std::span<const double> y);

}  // namespace gengap
