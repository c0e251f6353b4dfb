#include "gengap/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "gengap/checkpoint.hpp"
#include "gengap/errors.hpp"
#include "gengap/grid.hpp"
#include "gengap/numerics.hpp"
#include "gengap/rng.hpp"

namespace gengap {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void log_line(const StepOptions& o, const std::string& s) {
  if (o.log) *o.log << s << '\n' << std::flush;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  const auto threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

json load_manifest(const ExperimentLayout& layout) {
  if (!fs::exists(layout.manifest())) return json::object();
  try {
    auto j = json::parse(read_file(layout.manifest()));
    if (j.is_object()) return j;
  } catch (const std::exception&) {
  }
  return json::object();
}

void update_manifest(const ExperimentLayout& layout, const std::string& key, json value) {
  auto m = load_manifest(layout);
  m[key] = std::move(value);
  write_file_atomic(layout.manifest(), m.dump(1));
}

// Identity of a procedure's checkpoints: spec, dataset and grid width.
std::string checkpoint_stamp(const ExperimentConfig& cfg, const ProcedureSpec& proc) {
  json j{{"procedure", json::parse(procedure_to_json(proc))},
         {"dataset", json::parse(dataset_to_json(cfg.dataset))},
         {"J", cfg.J}};
  return j.dump(1);
}

bool stamp_matches(const fs::path& dir, const std::string& stamp) {
  const auto path = dir / "procedure.json";
  if (!fs::exists(path)) return false;
  try {
    return read_file(path) == stamp;
  } catch (const Error&) {
    return false;
  }
}

// Procedures ordered so distillation teachers named by procedure train first.
std::vector<const ProcedureEntry*> training_order(const ExperimentConfig& cfg) {
  std::vector<const ProcedureEntry*> order;
  std::set<std::string> done;
  std::vector<const ProcedureEntry*> pending;
  for (const auto& p : cfg.procedures) pending.push_back(&p);
  while (!pending.empty()) {
    std::vector<const ProcedureEntry*> rest;
    for (const auto* p : pending) {
      const auto* d = std::get_if<DistillObjective>(&p->spec.objective);
      const bool waits = d && cfg.find(d->teacher) && !done.count(d->teacher);
      if (waits) {
        rest.push_back(p);
      } else {
        order.push_back(p);
        done.insert(p->spec.name);
      }
    }
    if (rest.size() == pending.size()) {
      throw ConfigError(fmt::format("distillation teachers form a cycle at '{}'",
                                    rest.front()->spec.name));
    }
    pending = std::move(rest);
  }
  return order;
}

json run_to_json(const RunInfo& run) {
  json curves = json::array();
  for (const auto& c : run.curves) {
    json arr = json::array();
    for (const auto& e : c) {
      arr.push_back({{"epoch", e.epoch},
                     {"step", e.step},
                     {"train_loss", e.train_loss},
                     {"train_error", e.train_error}});
    }
    curves.push_back(arr);
  }
  std::vector<std::string> paths;
  for (const auto& p : run.checkpoints) paths.push_back(p.generic_string());
  json j{{"k", run.k},
         {"replicates", run.replicates},
         {"run_id", run.run_id},
         {"seed", run.seed},
         {"stream_seeds", run.stream_seeds},
         {"checkpoints", paths},
         {"curves", curves},
         {"wall_seconds", run.wall_seconds},
         {"resumed", run.resumed}};
  if (run.error) j["error"] = *run.error;
  return j;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& v) {
  std::vector<double> xs;
  for (const auto& x : v) {
    if (!x) return std::nullopt;
    xs.push_back(*x);
  }
  if (xs.empty()) return std::nullopt;
  return pairwise_sum(xs) / static_cast<double>(xs.size());
}

template <typename Fn>
std::optional<double> try_value(Fn&& fn) {
  try {
    return fn();
  } catch (const DegenerateInputError&) {
    return std::nullopt;
  }
}

}  // namespace

void StepResult::merge(const StepResult& other) {
  cells += other.cells;
  failures.insert(failures.end(), other.failures.begin(), other.failures.end());
}

DatasetBundle gen_data(const ExperimentConfig& config, const fs::path& out) {
  const ExperimentLayout layout(out);
  auto bundle = generate_dataset(config.dataset);
  save_dataset(layout.dataset(), bundle);
  write_file_atomic(layout.dataset_spec(), dataset_to_json(config.dataset));
  update_manifest(layout, "dataset",
                  {{"path", "data/dataset.bin"},
                   {"spec", json::parse(dataset_to_json(config.dataset))}});
  return bundle;
}

DatasetBundle ensure_dataset(const ExperimentConfig& config, const fs::path& out) {
  const ExperimentLayout layout(out);
  if (fs::exists(layout.dataset()) && fs::exists(layout.dataset_spec())) {
    try {
      if (read_file(layout.dataset_spec()) == dataset_to_json(config.dataset)) {
        return load_dataset(layout.dataset());
      }
    } catch (const Error&) {
    }
  }
  return gen_data(config, out);
}

StepResult train_step(const ExperimentConfig& config, const fs::path& out,
                      const StepOptions& options) {
  config.validate();
  const ExperimentLayout layout(out);
  const auto data = ensure_dataset(config, out);
  const auto train_sets = data.train_sets();
  const auto unlabeled = data.unlabeled();

  StepResult result;
  json procs = json::object();
  for (const auto* entry : training_order(config)) {
    const auto& proc = entry->spec;
    const auto dir = layout.checkpoints(proc.name);
    const auto stamp = checkpoint_stamp(config, proc);
    if (fs::exists(dir) && !stamp_matches(dir, stamp)) {
      log_line(options, fmt::format("{}: configuration changed, discarding checkpoints",
                                    proc.name));
      fs::remove_all(dir);
    }
    write_file_atomic(dir / "procedure.json", stamp);

    GridOptions go;
    go.jobs = options.jobs;
    go.checkpoint_dir = dir;
    go.unlabeled = &unlabeled;
    if (const auto* d = std::get_if<DistillObjective>(&proc.objective)) {
      if (config.find(d->teacher)) {
        const auto teacher_dir = layout.checkpoints(d->teacher);
        go.teacher = [teacher_dir](std::uint32_t k, std::uint32_t j) {
          return load_checkpoint(teacher_dir / fmt::format("{}_{}.ggap", k, j));
        };
      }
    }
    log_line(options, fmt::format("training {} ({} x {})", proc.name,
                                  train_sets.size(), config.J));
    ModelGrid grid;
    try {
      grid = train_grid(proc, train_sets, config.J, go);
    } catch (const Error& e) {
      result.failures.push_back(fmt::format("{}: {}", proc.name, e.what()));
      continue;
    }
    json runs = json::array();
    std::size_t resumed = 0;
    for (const auto& run : grid.runs) {
      runs.push_back(run_to_json(run));
      resumed += run.resumed ? 1 : 0;
    }
    result.cells += grid.runs.size();
    for (const auto& f : grid.failures()) {
      result.failures.push_back(fmt::format("{}: {}", proc.name, f));
    }
    log_line(options, fmt::format("  {} runs, {} resumed, {} failed", grid.runs.size(),
                                  resumed, grid.failures().size()));
    procs[proc.name] = {{"spec", json::parse(procedure_to_json(proc))},
                        {"assignment", entry->assignment},
                        {"K", train_sets.size()},
                        {"J", config.J},
                        {"runs", runs}};
  }
  update_manifest(layout, "name", config.name);
  update_manifest(layout, "procedures", procs);
  return result;
}

std::vector<MetricRow> compute_metrics(const ExperimentConfig& config,
                                       const DatasetBundle& data, const fs::path& out,
                                       const StepOptions& options, StepResult& result) {
  const ExperimentLayout layout(out);
  const auto K = data.train_indices.size();
  const auto J = config.J;
  const auto train_sets = data.train_sets();
  const auto test = data.test();
  const auto unlabeled = data.unlabeled();
  const auto n = config.dataset.train_size;
  const auto& mo = config.metrics;

  std::vector<MetricRow> rows;
  for (const auto& entry : config.procedures) {
    const auto& proc = entry.spec;
    const auto dir = layout.checkpoints(proc.name);
    const bool paired = is_paired(proc.objective);
    result.cells += K * J;

    std::vector<Model> models;
    if (!stamp_matches(dir, checkpoint_stamp(config, proc))) {
      result.failures.push_back(fmt::format("{}: no checkpoints for this configuration",
                                            proc.name));
    } else {
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < J; ++j) {
          const auto path = dir / fmt::format("{}_{}.ggap", k, j);
          const auto first = paired ? j - j % 2 : j;
          const Lineage expected{proc.name, static_cast<std::uint32_t>(k),
                                 static_cast<std::uint32_t>(j), k * J + first};
          try {
            auto m = load_checkpoint(path);
            if (!(m.lineage == expected) || !(m.spec == proc.model)) {
              throw FormatError("lineage or model spec mismatch");
            }
            models.push_back(std::move(m));
          } catch (const Error& e) {
            result.failures.push_back(
                fmt::format("{}: cell ({}, {}): {}", proc.name, k, j, e.what()));
          }
        }
      }
    }
    log_line(options, fmt::format("measuring {} ({} models)", proc.name, models.size()));

    MetricRow agg;
    agg.procedure = proc.name;
    agg.n = n;
    if (models.empty()) {
      rows.push_back(agg);
      continue;
    }

    const auto preds = predict_matrix(models, unlabeled, "unlabeled");
    save_predictions(layout.predictions(proc.name, "unlabeled"), preds);
    save_predictions(layout.predictions(proc.name, "test"),
                     predict_matrix(models, test.features, "test"));
    if (!data.dev_indices.empty()) {
      save_predictions(layout.predictions(proc.name, "dev"),
                       predict_matrix(models, data.dev().features, "dev"));
    }

    std::vector<MetricRow> model_rows(models.size());
    std::vector<std::string> warnings(models.size());
    parallel_for(models.size(), options.jobs, [&](std::size_t i) {
      const auto& m = models[i];
      const auto& train = train_sets[m.lineage.k];
      auto& r = model_rows[i];
      r.procedure = proc.name;
      r.model = fmt::format("{}_{}", m.lineage.k, m.lineage.j);
      r.k = m.lineage.k;
      r.j = m.lineage.j;
      r.run_id = m.lineage.run_id;
      r.n = n;
      const auto tr = eval_loss_error(m, train);
      const auto te = eval_loss_error(m, test);
      r.train_loss = tr.loss;
      r.test_loss = te.loss;
      r.gap = te.loss - tr.loss;
      r.train_err = tr.error;
      r.test_err = te.error;
      r.inconsistency = try_value([&] { return modelwise_inconsistency(preds, i); });
      r.disagreement = try_value([&] { return modelwise_disagreement(preds, i); });
      if (mo.sharpness_rho) r.one_sharpness = one_sharpness(m, train, *mo.sharpness_rho);
      if (mo.hessian) {
        auto po = mo.power_iteration;
        po.seed = derive_seed(po.seed, m.lineage.k, m.lineage.j, SeedRole::kProbe);
        try {
          r.hessian_eig = hessian_top_eigenvalue(m, train, po);
        } catch (const ConvergenceError& e) {
          warnings[i] = fmt::format("{} {}: {}", proc.name, r.model, e.what());
        }
      }
    });
    for (const auto& w : warnings) {
      if (!w.empty()) log_line(options, "warning: " + w);
    }

    auto column = [&](std::optional<double> MetricRow::*field) {
      std::vector<std::optional<double>> v;
      for (const auto& r : model_rows) v.push_back(r.*field);
      return v;
    };
    agg.train_loss = mean_of(column(&MetricRow::train_loss));
    agg.test_loss = mean_of(column(&MetricRow::test_loss));
    agg.gap = *agg.test_loss - *agg.train_loss;
    agg.train_err = mean_of(column(&MetricRow::train_err));
    agg.test_err = mean_of(column(&MetricRow::test_err));
    agg.inconsistency = try_value([&] { return estimate_inconsistency(preds); });
    agg.instability = try_value([&] { return estimate_instability(preds); });
    if (agg.inconsistency && agg.instability) agg.D = *agg.inconsistency + *agg.instability;
    agg.disagreement = try_value([&] { return estimate_disagreement(preds); });
    const auto one = one_norm_variants(preds);
    agg.c1 = one.inconsistency;
    agg.s1 = one.instability;
    agg.one_sharpness = mean_of(column(&MetricRow::one_sharpness));
    agg.hessian_eig = mean_of(column(&MetricRow::hessian_eig));
    if (mo.info && agg.D) {
      const auto b = bound_rhs(BoundInputs{*agg.D, *mo.info, static_cast<double>(n),
                                           mo.gamma});
      agg.bound_lambda = b.lambda;
      agg.bound_value = b.value;
    }
    rows.push_back(agg);
    for (auto& r : model_rows) rows.push_back(std::move(r));
  }
  return rows;
}

StepResult measure_step(const ExperimentConfig& config, const fs::path& out,
                        const StepOptions& options) {
  config.validate();
  const ExperimentLayout layout(out);
  const auto data = ensure_dataset(config, out);
  StepResult result;
  const auto rows = compute_metrics(config, data, out, options, result);
  write_file_atomic(layout.metrics(), format_metrics_csv(rows));
  std::vector<std::string> preds;
  for (const auto& p : config.procedures) {
    for (const char* split : {"unlabeled", "test", "dev"}) {
      const auto path = layout.predictions(p.spec.name, split);
      if (fs::exists(path)) preds.push_back(fs::relative(path, out).generic_string());
    }
  }
  update_manifest(layout, "measure",
                  {{"metrics", "metrics.csv"}, {"predictions", preds}});
  return result;
}

std::vector<ScoreRow> analyze_metrics(const AxesSpec& axes, std::span<const MetricRow> rows,
                                      const AnalysisOptions& options) {
  std::vector<ScoreRow> out;
  for (const auto& target : options.targets) {
    for (const auto& quantity : options.quantities) {
      out.push_back(score_quantity(axes, rows, quantity, target,
                                   options.max_condition_size,
                                   options.trainloss_cutoff));
    }
  }
  return out;
}

StepResult analyze_step(const ExperimentConfig& config, const fs::path& out) {
  const ExperimentLayout layout(out);
  const auto rows = parse_metrics_csv(read_file(layout.metrics()));
  const auto axes = axes_of(config);
  const auto scores = analyze_metrics(axes, rows, config.analysis);
  write_file_atomic(layout.scores(), format_scores_csv(scores));
  write_file_atomic(layout.axes(), axes_to_json(axes));
  update_manifest(layout, "analysis",
                  {{"scores", "analysis/scores.csv"}, {"axes", "analysis/axes.json"}});
  return {};
}

StepResult report_step(const fs::path& out) {
  const ExperimentLayout layout(out);
  const auto rows = parse_metrics_csv(read_file(layout.metrics()));
  std::vector<std::string> files;
  for (const auto& p : write_plots(layout.plots(), rows)) {
    files.push_back(fs::relative(p, out).generic_string());
  }
  update_manifest(layout, "plots", files);
  return {};
}

StepResult run_experiment(const ExperimentConfig& config, const fs::path& out,
                          const StepOptions& options) {
  config.validate();
  StepResult result = train_step(config, out, options);
  StepResult measured = measure_step(config, out, options);
  // Cells are counted once, by training; measurement adds its own failures.
  for (const auto& f : measured.failures) {
    if (std::find(result.failures.begin(), result.failures.end(), f) ==
        result.failures.end()) {
      result.failures.push_back(f);
    }
  }
  analyze_step(config, out);
  report_step(out);
  return result;
}

}  // namespace gengap
