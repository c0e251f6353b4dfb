#include "gengap/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include <fmt/format.h>

#include "gengap/errors.hpp"

namespace gengap {

void ProcedureTable::add(ProcedureRow row) {
  if (row.assignment.size() != axes_.size()) {
    throw DomainError(fmt::format("procedure '{}' assigns {} axes, table has {}",
                                  row.id, row.assignment.size(), axes_.size()));
  }
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const auto& vals = axes_[a].values;
    if (std::find(vals.begin(), vals.end(), row.assignment[a]) == vals.end()) {
      throw DomainError(fmt::format("procedure '{}': '{}' is not a declared value of axis '{}'",
                                    row.id, row.assignment[a], axes_[a].name));
    }
  }
  for (const auto& r : rows_) {
    if (r.id == row.id) {
      throw DomainError(fmt::format("duplicate procedure id '{}'", row.id));
    }
  }
  rows_.push_back(std::move(row));
}

StandardizedSeries standardize(std::span<const double> values) {
  if (values.size() < 2) throw DomainError("standardize needs at least two values");
  const auto n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0.0) || sd <= 1e-300) {
    throw DegenerateInputError("standardize: values have zero variance");
  }
  StandardizedSeries out;
  out.mean = mean;
  out.stdev = sd;
  out.values.reserve(values.size());
  for (double v : values) out.values.push_back((v - mean) / sd);
  return out;
}

namespace {

int sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

double kendall_tau(std::span<const std::pair<double, double>> pairs) {
  const auto n = pairs.size();
  if (n < 2) throw DomainError("kendall_tau needs at least two pairs");
  long long total = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      total += sign(pairs[a].first - pairs[b].first) *
               sign(pairs[a].second - pairs[b].second);
    }
  }
  // Each unordered pair appears twice among ordered pairs with equal sign.
  return 2.0 * static_cast<double>(total) /
         (static_cast<double>(n) * static_cast<double>(n - 1));
}

double kendall_tau(std::span<const double> mu, std::span<const double> g) {
  if (mu.size() != g.size()) throw ShapeError("kendall_tau: length mismatch");
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < mu.size(); ++i) pairs.emplace_back(mu[i], g[i]);
  return kendall_tau(pairs);
}

namespace {

// Enumerates every assignment of values to the axes in `axes` (mixed radix).
void for_each_assignment(const std::vector<Axis>& all,
                         const std::vector<std::size_t>& axes,
                         const std::function<void(const std::vector<std::string>&)>& f) {
  std::vector<std::size_t> idx(axes.size(), 0);
  std::vector<std::string> vals(axes.size());
  for (const auto a : axes) {
    if (all[a].values.empty()) return;
  }
  while (true) {
    for (std::size_t i = 0; i < axes.size(); ++i) {
      vals[i] = all[axes[i]].values[idx[i]];
    }
    f(vals);
    std::size_t pos = 0;
    while (pos < axes.size()) {
      if (++idx[pos] < all[axes[pos]].values.size()) break;
      idx[pos] = 0;
      ++pos;
    }
    if (pos == axes.size()) return;
  }
}

void require_full_grid(const ProcedureTable& table) {
  const auto& axes = table.axes();
  std::vector<std::size_t> all(axes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<std::string> missing;
  for_each_assignment(axes, all, [&](const std::vector<std::string>& cell) {
    const bool found =
        std::any_of(table.rows().begin(), table.rows().end(),
                    [&](const ProcedureRow& r) { return r.assignment == cell; });
    if (!found) missing.push_back(fmt::format("({})", fmt::join(cell, ",")));
  });
  if (!missing.empty()) {
    throw DomainError(fmt::format("incomplete procedure grid; missing cells: {}",
                                  fmt::join(missing, " ")));
  }
}

bool all_equal(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
}

}  // namespace

GranulatedKendall granulated_kendall(const ProcedureTable& table) {
  const auto& axes = table.axes();
  if (axes.empty()) throw DomainError("granulated_kendall needs at least one axis");
  require_full_grid(table);
  GranulatedKendall out;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    std::vector<std::size_t> others;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (a != i) others.push_back(a);
    }
    double axis_sum = 0.0;
    std::size_t slices = 0;
    for_each_assignment(axes, others, [&](const std::vector<std::string>& fixed) {
      std::vector<double> mu, g;
      for (const auto& r : table.rows()) {
        bool match = true;
        for (std::size_t o = 0; o < others.size() && match; ++o) {
          match = r.assignment[others[o]] == fixed[o];
        }
        if (!match) continue;
        mu.push_back(r.mu);
        g.push_back(r.g);
      }
      if (mu.size() < 2 || all_equal(mu) || all_equal(g)) return;
      axis_sum += kendall_tau(mu, g);
      ++slices;
    });
    if (slices == 0) {
      out.per_axis.push_back(std::nullopt);
      continue;
    }
    const double psi_i = axis_sum / static_cast<double>(slices);
    out.per_axis.push_back(psi_i);
    sum += psi_i;
    ++defined;
  }
  if (defined == 0) {
    throw DegenerateInputError("granulated_kendall: every slice is undefined");
  }
  out.Psi = sum / static_cast<double>(defined);
  return out;
}

namespace {

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

// Normalized conditional MI for one conditioning set.
double conditional_score(const ProcedureTable& table,
                         const std::vector<std::size_t>& cond) {
  // Counts keyed by the conditioning value (pair's joint axis values).
  struct Counts {
    double n = 0.0;
    double joint[3][3] = {};
    double vmu[3] = {};
    double vg[3] = {};
  };
  std::map<std::vector<std::string>, Counts> groups;
  const auto& rows = table.rows();
  double total = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < rows.size(); ++b) {
      if (a == b) continue;
      std::vector<std::string> key;
      for (auto c : cond) key.push_back(rows[a].assignment[c]);
      for (auto c : cond) key.push_back(rows[b].assignment[c]);
      const int sm = sign(rows[a].mu - rows[b].mu) + 1;
      const int sg = sign(rows[a].g - rows[b].g) + 1;
      auto& cnt = groups[key];
      cnt.n += 1.0;
      cnt.joint[sm][sg] += 1.0;
      cnt.vmu[sm] += 1.0;
      cnt.vg[sg] += 1.0;
      total += 1.0;
    }
  }
  double mi = 0.0, h = 0.0;
  for (const auto& [key, c] : groups) {
    const double pu = c.n / total;
    double mi_u = 0.0, h_u = 0.0;
    for (int s = 0; s < 3; ++s) {
      for (int t = 0; t < 3; ++t) {
        if (c.joint[s][t] == 0.0) continue;
        const double pj = c.joint[s][t] / c.n;
        mi_u += pj * std::log(pj / ((c.vmu[s] / c.n) * (c.vg[t] / c.n)));
      }
      h_u -= plogp(c.vg[s] / c.n);
    }
    mi += pu * mi_u;
    h += pu * h_u;
  }
  if (!(h > 0.0)) {
    std::vector<std::string> names;
    for (auto c : cond) names.push_back(table.axes()[c].name);
    throw DegenerateInputError(fmt::format(
        "mi_kappa: H(V_g | U_S) is zero for S = {{{}}}", fmt::join(names, ",")));
  }
  return mi / h;
}

}  // namespace

MiKappa mi_kappa(const ProcedureTable& table, std::size_t max_condition_size) {
  if (table.size() < 2) throw DomainError("mi_kappa needs at least two procedures");
  const auto n_axes = table.axes().size();
  MiKappa out;
  std::vector<std::size_t> current;
  // Subsets in order of size, then lexicographic.
  std::function<void(std::size_t, std::size_t)> visit =
      [&](std::size_t start, std::size_t size) {
        if (current.size() == size) {
          out.per_condition.push_back({current, conditional_score(table, current)});
          return;
        }
        for (std::size_t a = start; a < n_axes; ++a) {
          current.push_back(a);
          visit(a + 1, size);
          current.pop_back();
        }
      };
  const auto max_size = std::min(max_condition_size, n_axes);
  for (std::size_t size = 0; size <= max_size; ++size) visit(0, size);
  out.kappa_s0 = out.per_condition.front().score;
  out.kappa = out.kappa_s0;
  for (const auto& s : out.per_condition) out.kappa = std::min(out.kappa, s.score);
  return out;
}

double loo_linear_prediction_error(std::span<const double> x,
                                   std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("loo: series lengths differ");
  if (x.size() < 3) throw DomainError("loo: needs at least three points");
  const auto xs = standardize(x).values;
  const auto ys = standardize(y).values;
  const auto n = xs.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      mx += xs[k];
      my += ys[k];
    }
    const auto m = static_cast<double>(n - 1);
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      sxx += (xs[k] - mx) * (xs[k] - mx);
      sxy += (xs[k] - mx) * (ys[k] - my);
    }
    if (!(sxx > 1e-300)) {
      throw DegenerateInputError(
          fmt::format("loo: fold {} has zero variance in x", i));
    }
    const double slope = sxy / sxx;
    const double pred = my + slope * (xs[i] - mx);
    total += std::abs(pred - ys[i]);
  }
  return total / static_cast<double>(n);
}

}  // namespace gengap
