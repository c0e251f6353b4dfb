#include "gengap/report.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "gengap/checkpoint.hpp"
#include "gengap/errors.hpp"

namespace gengap {

namespace {

using Field = std::optional<double> MetricRow::*;

const std::vector<std::pair<std::string, Field>>& value_fields() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"train_loss", &MetricRow::train_loss},
      {"test_loss", &MetricRow::test_loss},
      {"gap", &MetricRow::gap},
      {"train_err", &MetricRow::train_err},
      {"test_err", &MetricRow::test_err},
      {"inconsistency", &MetricRow::inconsistency},
      {"instability", &MetricRow::instability},
      {"D", &MetricRow::D},
      {"disagreement", &MetricRow::disagreement},
      {"c1", &MetricRow::c1},
      {"s1", &MetricRow::s1},
      {"one_sharpness", &MetricRow::one_sharpness},
      {"hessian_eig", &MetricRow::hessian_eig},
      {"bound_lambda", &MetricRow::bound_lambda},
      {"bound_value", &MetricRow::bound_value},
  };
  return fields;
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt::format("{:.17g}", *v) : std::string();
}

template <typename T>
std::string fmt_opt_int(const std::optional<T>& v) {
  return v ? fmt::format("{}", *v) : std::string();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::optional<double> parse_double(const std::string& s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(fmt::format("metrics CSV line {}: '{}' is not a number", line, s));
  }
}

std::optional<std::uint64_t> parse_uint(const std::string& s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(
        fmt::format("metrics CSV line {}: '{}' is not an unsigned integer", line, s));
  }
  return v;
}

std::string clean_note(std::string s) {
  std::replace_if(s.begin(), s.end(),
                  [](char c) { return c == ',' || c == '\n' || c == '\r' || c == '"'; },
                  ' ');
  return s;
}

}  // namespace

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"procedure", "model", "k", "j", "run_id", "n"};
    for (const auto& [name, field] : value_fields()) c.push_back(name);
    return c;
  }();
  return cols;
}

const std::vector<std::string>& metric_value_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c;
    for (const auto& [name, field] : value_fields()) c.push_back(name);
    return c;
  }();
  return cols;
}

std::optional<double> metric_value(const MetricRow& row, const std::string& column) {
  for (const auto& [name, field] : value_fields()) {
    if (name == column) return row.*field;
  }
  throw ConfigError(fmt::format("unknown metric column '{}'", column));
}

std::string format_metrics_csv(std::span<const MetricRow> rows) {
  std::string out = fmt::format("{}\n", fmt::join(metric_columns(), ","));
  for (const auto& r : rows) {
    std::vector<std::string> cells = {r.procedure,         r.model,
                                      fmt_opt_int(r.k),    fmt_opt_int(r.j),
                                      fmt_opt_int(r.run_id), fmt::format("{}", r.n)};
    for (const auto& [name, field] : value_fields()) cells.push_back(fmt_opt(r.*field));
    out += fmt::format("{}\n", fmt::join(cells, ","));
  }
  return out;
}

std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("metrics CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  if (header != metric_columns()) {
    std::vector<std::string> missing;
    for (const auto& c : metric_columns()) {
      if (std::find(header.begin(), header.end(), c) == header.end()) missing.push_back(c);
    }
    throw FormatError(missing.empty()
                          ? std::string("metrics CSV columns are out of order")
                          : fmt::format("metrics CSV is missing columns: {}",
                                        fmt::join(missing, ", ")));
  }
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw FormatError(fmt::format("metrics CSV line {} has {} fields, expected {}",
                                    lineno, cells.size(), header.size()));
    }
    MetricRow r;
    r.procedure = cells[0];
    r.model = cells[1];
    r.k = parse_uint(cells[2], lineno);
    r.j = parse_uint(cells[3], lineno);
    r.run_id = parse_uint(cells[4], lineno);
    const auto n = parse_uint(cells[5], lineno);
    if (!n) throw FormatError(fmt::format("metrics CSV line {}: n is empty", lineno));
    r.n = *n;
    std::size_t c = 6;
    for (const auto& [name, field] : value_fields()) r.*field = parse_double(cells[c++], lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

ScoreRow score_quantity(const AxesSpec& axes, std::span<const MetricRow> rows,
                        const std::string& quantity, const std::string& target,
                        std::size_t max_condition_size,
                        std::optional<double> trainloss_cutoff) {
  ScoreRow out;
  out.quantity = quantity;
  out.target = target;
  for (const auto& a : axes.axes) out.axis_names.push_back(a.name);
  out.psi_per_axis.assign(axes.axes.size(), std::nullopt);

  std::map<std::string, const MetricRow*> aggregates;
  for (const auto& r : rows) {
    if (r.is_aggregate()) aggregates[r.procedure] = &r;
  }
  ProcedureTable table(axes.axes);
  std::vector<double> mu, g;
  for (const auto& [name, assignment] : axes.assignments) {
    const auto it = aggregates.find(name);
    if (it == aggregates.end()) {
      out.notes.push_back(fmt::format("{}: no aggregate row", name));
      continue;
    }
    const auto& row = *it->second;
    if (trainloss_cutoff && (!row.train_loss || *row.train_loss > *trainloss_cutoff)) {
      out.notes.push_back(fmt::format("{}: above trainloss cutoff", name));
      continue;
    }
    const auto q = metric_value(row, quantity);
    const auto t = metric_value(row, target);
    if (!q || !t) {
      out.notes.push_back(fmt::format("{}: missing {}", name, !q ? quantity : target));
      continue;
    }
    table.add({name, assignment, *q, *t});
    mu.push_back(*q);
    g.push_back(*t);
  }
  out.procedures = table.size();

  // Library errors already name the score they came from.
  auto attempt = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      out.notes.push_back(e.what());
    }
  };
  attempt([&] { out.tau = kendall_tau(mu, g); });
  attempt([&] {
    const auto gk = granulated_kendall(table);
    out.Psi = gk.Psi;
    out.psi_per_axis = gk.per_axis;
  });
  attempt([&] {
    const auto limit = axes.axes.empty() ? 0 : axes.axes.size() - 1;
    const auto mk = mi_kappa(table, std::min(max_condition_size, limit));
    out.kappa = mk.kappa;
    out.kappa_s0 = mk.kappa_s0;
  });
  attempt([&] { out.loo_error = loo_linear_prediction_error(mu, g); });
  return out;
}

std::string format_scores_csv(std::span<const ScoreRow> rows) {
  std::string out =
      "quantity,target,procedures,tau,psi_per_axis,Psi,kappa,kappa_s0,loo_error,notes\n";
  for (const auto& r : rows) {
    std::vector<std::string> psi;
    for (std::size_t a = 0; a < r.axis_names.size(); ++a) {
      psi.push_back(fmt::format("{}={}", r.axis_names[a], fmt_opt(r.psi_per_axis[a])));
    }
    std::vector<std::string> notes;
    for (const auto& n : r.notes) notes.push_back(clean_note(n));
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.quantity, r.target,
                       r.procedures, fmt_opt(r.tau), fmt::join(psi, ";"),
                       fmt_opt(r.Psi), fmt_opt(r.kappa), fmt_opt(r.kappa_s0),
                       fmt_opt(r.loo_error), fmt::join(notes, "; "));
  }
  return out;
}

const std::vector<PlotFamily>& plot_families() {
  static const std::vector<PlotFamily> families = {
      {"gap_vs_D", "D", "gap"},
      {"gap_vs_inconsistency", "inconsistency", "gap"},
      {"testerr_vs_disagreement", "disagreement", "test_err"},
      {"gap_vs_sharpness", "one_sharpness", "gap"},
  };
  return families;
}

std::string format_plot_series(const PlotFamily& family,
                               std::span<const MetricRow> rows) {
  std::string out = fmt::format("procedure\t{}\t{}\n", family.x, family.y);
  for (const auto& r : rows) {
    if (!r.is_aggregate()) continue;
    const auto x = metric_value(r, family.x);
    const auto y = metric_value(r, family.y);
    if (!x || !y) continue;
    out += fmt::format("{}\t{:.17g}\t{:.17g}\n", r.procedure, *x, *y);
  }
  return out;
}

std::vector<std::filesystem::path> write_plots(const std::filesystem::path& dir,
                                               std::span<const MetricRow> rows) {
  std::vector<std::filesystem::path> paths;
  for (const auto& f : plot_families()) {
    const auto path = dir / (f.file + ".tsv");
    write_file_atomic(path, format_plot_series(f, rows));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace gengap
