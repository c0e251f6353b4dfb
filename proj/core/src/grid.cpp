#include "gengap/grid.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "gengap/checkpoint.hpp"
#include "gengap/errors.hpp"
#include "gengap/rng.hpp"

namespace gengap {

using nlohmann::json;

std::vector<std::string> ModelGrid::failures() const {
  std::vector<std::string> out;
  for (const auto& r : runs) {
    if (r.error) {
      out.push_back(fmt::format("{} cell (k={}, j={}): {}", procedure, r.k,
                                r.replicates.front(), *r.error));
    }
  }
  return out;
}

std::vector<Model> ModelGrid::group(std::uint32_t k) const {
  std::vector<Model> out;
  for (const auto& m : models) {
    if (m.lineage.k == k) out.push_back(m);
  }
  return out;
}

std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t k, std::size_t j) {
  return derive_seed(base_seed, k, j, SeedRole::kCell);
}

namespace {

std::filesystem::path ckpt_path(const std::filesystem::path& dir, std::size_t k,
                                std::size_t j) {
  return dir / fmt::format("{}_{}.ggap", k, j);
}

std::filesystem::path run_sidecar(const std::filesystem::path& dir,
                                  std::size_t k, std::size_t j) {
  return dir / fmt::format("{}_{}.run.json", k, j);
}

json curves_to_json(const std::vector<std::vector<EpochStats>>& curves) {
  json out = json::array();
  for (const auto& c : curves) {
    json arr = json::array();
    for (const auto& e : c) {
      arr.push_back({{"epoch", e.epoch},
                     {"step", e.step},
                     {"train_loss", e.train_loss},
                     {"train_error", e.train_error}});
    }
    out.push_back(arr);
  }
  return out;
}

std::vector<std::vector<EpochStats>> curves_from_json(const json& j) {
  std::vector<std::vector<EpochStats>> out;
  for (const auto& c : j) {
    std::vector<EpochStats> curve;
    for (const auto& e : c) {
      curve.push_back({e.at("epoch").get<std::size_t>(),
                       e.at("step").get<std::size_t>(),
                       e.at("train_loss").get<double>(),
                       e.at("train_error").get<double>()});
    }
    out.push_back(std::move(curve));
  }
  return out;
}

// Attempts to resume a run from disk; returns the models on success.
std::optional<std::vector<Model>> try_resume(const std::filesystem::path& dir,
                                             const ProcedureSpec& proc,
                                             RunInfo& run) {
  std::vector<Model> models;
  for (auto j : run.replicates) {
    const auto path = ckpt_path(dir, run.k, j);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
      Model m = load_checkpoint(path);
      const Lineage expected{proc.name, run.k, j, run.run_id};
      if (!(m.lineage == expected) || !(m.spec == proc.model)) return std::nullopt;
      models.push_back(std::move(m));
      run.checkpoints.push_back(path);
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  const auto sidecar = run_sidecar(dir, run.k, run.replicates.front());
  try {
    const auto meta = json::parse(read_file(sidecar));
    if (meta.at("seed").get<std::uint64_t>() != run.seed) return std::nullopt;
    run.stream_seeds = meta.at("stream_seeds").get<std::vector<std::uint64_t>>();
    run.curves = curves_from_json(meta.at("curves"));
    run.wall_seconds = meta.value("wall_seconds", 0.0);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  run.resumed = true;
  return models;
}

TrainRecord train_run(const ProcedureSpec& proc, const LabeledSet& train,
                      const RunInfo& run, const GridOptions& options) {
  if (std::holds_alternative<ConsistObjective>(proc.objective) ||
      std::holds_alternative<ConsistFlatObjective>(proc.objective)) {
    return train_codistill(proc, train, run.seed);
  }
  if (std::holds_alternative<SemiConsistObjective>(proc.objective)) {
    if (options.unlabeled == nullptr) {
      throw DomainError("semi_consist procedure needs an unlabeled set");
    }
    return train_semi_codistill(proc, train, *options.unlabeled, run.seed);
  }
  if (std::holds_alternative<DistillObjective>(proc.objective)) {
    if (options.teacher) {
      return train_distill(proc, train, options.teacher(run.k, run.replicates[0]),
                           run.seed);
    }
    return train_distill(proc, train, run.seed);
  }
  return train_standard(proc, train, run.seed);
}

}  // namespace

ModelGrid train_grid(const ProcedureSpec& proc,
                     std::span<const LabeledSet> train_sets, std::size_t J,
                     const GridOptions& options) {
  proc.validate();
  const auto K = train_sets.size();
  if (K == 0 || J == 0) throw DomainError("train_grid needs K >= 1 and J >= 1");
  const bool paired = is_paired(proc.objective);
  if (paired && J % 2 != 0) {
    throw DomainError(fmt::format(
        "procedure '{}' trains models in pairs; J = {} must be even", proc.name, J));
  }
  const std::size_t per_run = paired ? 2 : 1;

  std::vector<RunInfo> runs;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < J; j += per_run) {
      RunInfo r;
      r.k = static_cast<std::uint32_t>(k);
      for (std::size_t m = 0; m < per_run; ++m) {
        r.replicates.push_back(static_cast<std::uint32_t>(j + m));
      }
      r.run_id = k * J + j;
      r.seed = cell_seed(proc.base_seed, k, j);
      runs.push_back(std::move(r));
    }
  }

  std::vector<std::vector<Model>> results(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < runs.size(); i = next.fetch_add(1)) {
      auto& run = runs[i];
      try {
        if (options.checkpoint_dir) {
          if (auto resumed = try_resume(*options.checkpoint_dir, proc, run)) {
            results[i] = std::move(*resumed);
            continue;
          }
        }
        run.checkpoints.clear();
        auto rec = train_run(proc, train_sets[run.k], run, options);
        for (std::size_t m = 0; m < rec.models.size(); ++m) {
          rec.models[m].lineage =
              Lineage{proc.name, run.k, run.replicates[m], run.run_id};
        }
        run.stream_seeds = rec.stream_seeds;
        run.curves = rec.curves;
        run.wall_seconds = rec.wall_seconds;
        if (options.checkpoint_dir) {
          for (std::size_t m = 0; m < rec.models.size(); ++m) {
            const auto path =
                ckpt_path(*options.checkpoint_dir, run.k, run.replicates[m]);
            save_checkpoint(path, rec.models[m]);
            run.checkpoints.push_back(path);
          }
          json meta = {{"procedure", proc.name},
                       {"k", run.k},
                       {"replicates", run.replicates},
                       {"run_id", run.run_id},
                       {"seed", run.seed},
                       {"stream_seeds", run.stream_seeds},
                       {"wall_seconds", run.wall_seconds},
                       {"curves", curves_to_json(run.curves)}};
          write_file_atomic(run_sidecar(*options.checkpoint_dir, run.k,
                                        run.replicates.front()),
                            meta.dump(1));
        }
        results[i] = std::move(rec.models);
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  };
  const auto jobs = std::max<std::size_t>(1, std::min(options.jobs, runs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (options.checkpoint_dir) {
    for (auto& run : runs) {
      if (run.error || !run.checkpoints.empty()) continue;
      for (auto j : run.replicates) {
        run.checkpoints.push_back(ckpt_path(*options.checkpoint_dir, run.k, j));
      }
    }
  }

  ModelGrid grid;
  grid.procedure = proc.name;
  grid.K = K;
  grid.J = J;
  for (auto& r : results) {
    for (auto& m : r) grid.models.push_back(std::move(m));
  }
  std::sort(grid.models.begin(), grid.models.end(),
            [](const Model& a, const Model& b) {
              return std::tie(a.lineage.k, a.lineage.j) <
                     std::tie(b.lineage.k, b.lineage.j);
            });
  grid.runs = std::move(runs);
  return grid;
}

void require_complete(const ModelGrid& grid) {
  const auto f = grid.failures();
  if (!f.empty()) {
    throw Error(fmt::format("{} run(s) failed: {}", f.size(), fmt::join(f, "; ")));
  }
}

}  // namespace gengap
