// gengap: train model grids from a config, measure output-space quantities
// and score how well they track the generalization gap.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gengap/checkpoint.hpp"
#include "gengap/config.hpp"
#include "gengap/errors.hpp"
#include "gengap/experiment.hpp"
#include "gengap/report.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitFailedCells = 1;
constexpr int kExitError = 2;

struct Common {
  std::string config;
  std::string out;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed_override;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "Experiment config (JSON)");
  if (config_required) opt->required();
  opt->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory (default: $GENGAP_OUT)");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed-override", c.seed_override,
                  "Replace the dataset and procedure seeds");
}

fs::path resolve_out(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("GENGAP_OUT"); env && *env) return env;
  throw gengap::ConfigError("no output directory: pass --out or set GENGAP_OUT");
}

gengap::ExperimentConfig load(const Common& c) {
  auto cfg = gengap::load_config(c.config);
  if (c.seed_override) gengap::apply_seed_override(cfg, *c.seed_override);
  return cfg;
}

int finish(const gengap::StepResult& r) {
  for (const auto& f : r.failures) std::cerr << "failed: " << f << '\n';
  if (!r.ok()) {
    std::cerr << fmt::format("{} of {} cells failed\n", r.failures.size(), r.cells);
    return kExitFailedCells;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gengap: generalization-gap measurement toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  Common gen, train, measure, analyze, report, run;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the dataset splits");
  add_common(gen_cmd, gen, true);
  auto* train_cmd = app.add_subcommand("train", "Train every procedure's K x J grid");
  add_common(train_cmd, train, true);
  auto* measure_cmd =
      app.add_subcommand("measure", "Evaluate checkpoints and write metrics.csv");
  add_common(measure_cmd, measure, true);

  auto* analyze_cmd =
      app.add_subcommand("analyze", "Score quantities against the gap across procedures");
  add_common(analyze_cmd, analyze, false);
  std::string metrics_path, axes_path;
  std::vector<std::string> quantities, targets;
  std::optional<std::size_t> max_condition;
  std::optional<double> cutoff;
  analyze_cmd->add_option("--metrics", metrics_path, "metrics.csv to analyze")
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--axes", axes_path, "Axes file or experiment config")
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--quantity", quantities, "Metric column(s) to score");
  analyze_cmd->add_option("--target", targets, "Target column(s), e.g. gap or test_err");
  analyze_cmd->add_option("--max-condition-size", max_condition,
                          "Largest conditioning set for kappa");
  analyze_cmd->add_option("--trainloss-cutoff", cutoff,
                          "Leave out procedures with higher mean training loss");

  auto* report_cmd = app.add_subcommand("report", "Write plot series from metrics.csv");
  add_common(report_cmd, report, false);
  auto* run_cmd = app.add_subcommand("run", "gen-data, train, measure, analyze, report");
  add_common(run_cmd, run, true);

  CLI11_PARSE(app, argc, argv);
  gengap::StepOptions so;
  so.log = quiet ? nullptr : &std::cerr;

  try {
    if (gen_cmd->parsed()) {
      const auto cfg = load(gen);
      const auto out = resolve_out(gen);
      const auto bundle = gengap::gen_data(cfg, out);
      if (!quiet) {
        std::cerr << fmt::format("wrote {} samples to {}\n", bundle.labels.size(),
                                 gengap::ExperimentLayout(out).dataset().string());
      }
      return 0;
    }
    if (train_cmd->parsed()) {
      so.jobs = train.jobs;
      return finish(gengap::train_step(load(train), resolve_out(train), so));
    }
    if (measure_cmd->parsed()) {
      so.jobs = measure.jobs;
      return finish(gengap::measure_step(load(measure), resolve_out(measure), so));
    }
    if (analyze_cmd->parsed()) {
      std::optional<gengap::ExperimentConfig> cfg;
      if (!analyze.config.empty()) cfg = load(analyze);
      std::optional<fs::path> out;
      if (!analyze.out.empty() || std::getenv("GENGAP_OUT")) out = resolve_out(analyze);

      fs::path mpath = metrics_path;
      if (mpath.empty()) {
        if (!out) throw gengap::ConfigError("analyze needs --metrics or an output directory");
        mpath = gengap::ExperimentLayout(*out).metrics();
      }
      gengap::AxesSpec axes;
      if (!axes_path.empty()) {
        axes = gengap::parse_axes(gengap::read_file(axes_path));
      } else if (cfg) {
        axes = gengap::axes_of(*cfg);
      } else {
        throw gengap::ConfigError("analyze needs --axes or --config");
      }
      gengap::AnalysisOptions ao = cfg ? cfg->analysis : gengap::AnalysisOptions{};
      if (!quantities.empty()) ao.quantities = quantities;
      if (!targets.empty()) ao.targets = targets;
      if (max_condition) ao.max_condition_size = *max_condition;
      if (cutoff) ao.trainloss_cutoff = cutoff;

      const auto rows = gengap::parse_metrics_csv(gengap::read_file(mpath));
      const auto scores = gengap::analyze_metrics(axes, rows, ao);
      const auto csv = gengap::format_scores_csv(scores);
      std::cout << csv;
      if (out) {
        const gengap::ExperimentLayout layout(*out);
        gengap::write_file_atomic(layout.scores(), csv);
        gengap::write_file_atomic(layout.axes(), gengap::axes_to_json(axes));
      }
      return 0;
    }
    if (report_cmd->parsed()) {
      return finish(gengap::report_step(resolve_out(report)));
    }
    if (run_cmd->parsed()) {
      so.jobs = run.jobs;
      return finish(gengap::run_experiment(load(run), resolve_out(run), so));
    }
  } catch (const gengap::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
