#include "gengap/config.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "gengap/checkpoint.hpp"
#include "gengap/errors.hpp"

namespace gengap {

using ojson = nlohmann::ordered_json;

namespace {

void check_keys(const ojson& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!j.is_object()) throw ConfigError(fmt::format("{} must be an object", context));
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* a) { return key == a; });
    if (!ok) throw ConfigError(fmt::format("{}: unknown key '{}'", context, key));
  }
}

template <typename T>
T get_or(const ojson& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

template <typename T>
std::optional<T> get_opt(const ojson& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

Objective parse_objective(const ojson& j, const std::string& ctx) {
  if (j.is_string()) return parse_objective(ojson{{"type", j}}, ctx);
  const auto type = get_or<std::string>(j, "type", "standard");
  if (type == "standard") {
    check_keys(j, {"type"}, ctx);
    return StandardObjective{};
  }
  if (type == "consist") {
    check_keys(j, {"type", "beta"}, ctx);
    return ConsistObjective{get_or(j, "beta", 1.0)};
  }
  if (type == "sam") {
    check_keys(j, {"type", "rho", "m"}, ctx);
    return SamObjective{get_or(j, "rho", 0.05), get_or<std::size_t>(j, "m", 0)};
  }
  if (type == "consist_flat") {
    check_keys(j, {"type", "beta", "rho", "m"}, ctx);
    return ConsistFlatObjective{get_or(j, "beta", 1.0), get_or(j, "rho", 0.05),
                                get_or<std::size_t>(j, "m", 0)};
  }
  if (type == "semi_consist") {
    check_keys(j, {"type", "beta", "threshold", "ema_momentum", "unlabeled_batch_size"},
               ctx);
    return SemiConsistObjective{get_or(j, "beta", 1.0), get_or(j, "threshold", 0.5),
                                get_or(j, "ema_momentum", 0.999),
                                get_or<std::size_t>(j, "unlabeled_batch_size", 0)};
  }
  if (type == "distill") {
    check_keys(j, {"type", "teacher", "beta_kl"}, ctx);
    return DistillObjective{get_or<std::string>(j, "teacher", ""),
                            get_or(j, "beta_kl", 1.0)};
  }
  throw ConfigError(fmt::format("{}: unknown objective type '{}'", ctx, type));
}

ojson objective_to_json(const Objective& o) {
  ojson j{{"type", objective_name(o)}};
  if (auto* c = std::get_if<ConsistObjective>(&o)) j["beta"] = c->beta;
  if (auto* s = std::get_if<SamObjective>(&o)) {
    j["rho"] = s->rho;
    j["m"] = s->m;
  }
  if (auto* c = std::get_if<ConsistFlatObjective>(&o)) {
    j["beta"] = c->beta;
    j["rho"] = c->rho;
    j["m"] = c->m;
  }
  if (auto* s = std::get_if<SemiConsistObjective>(&o)) {
    j["beta"] = s->beta;
    j["threshold"] = s->confidence_threshold;
    j["ema_momentum"] = s->ema_momentum;
    j["unlabeled_batch_size"] = s->unlabeled_batch_size;
  }
  if (auto* d = std::get_if<DistillObjective>(&o)) {
    j["teacher"] = d->teacher;
    j["beta_kl"] = d->beta_kl;
  }
  return j;
}

ScheduleKind parse_schedule_kind(const std::string& s, const std::string& ctx) {
  if (s == "constant") return ScheduleKind::kConstant;
  if (s == "cosine") return ScheduleKind::kCosine;
  if (s == "linear") return ScheduleKind::kLinear;
  throw ConfigError(fmt::format("{}: unknown schedule kind '{}'", ctx, s));
}

std::string schedule_kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kConstant:
      return "constant";
    case ScheduleKind::kCosine:
      return "cosine";
    case ScheduleKind::kLinear:
      return "linear";
  }
  return "?";
}

AugmentKind parse_augment_kind(const std::string& s, const std::string& ctx) {
  if (s == "none") return AugmentKind::kNone;
  if (s == "gaussian_noise") return AugmentKind::kGaussianNoise;
  if (s == "shift") return AugmentKind::kShift;
  throw ConfigError(fmt::format("{}: unknown augmentation '{}'", ctx, s));
}

std::string augment_kind_name(AugmentKind k) {
  switch (k) {
    case AugmentKind::kNone:
      return "none";
    case AugmentKind::kGaussianNoise:
      return "gaussian_noise";
    case AugmentKind::kShift:
      return "shift";
  }
  return "?";
}

ProcedureSpec parse_procedure(const ojson& j, const DatasetSpec& data,
                              std::uint64_t default_seed) {
  const auto name = get_or<std::string>(j, "name", "");
  const auto ctx = fmt::format("procedure '{}'", name);
  check_keys(j,
             {"name", "axes", "model", "objective", "momentum", "schedule", "epochs",
              "update_steps", "batch_size", "weight_decay", "label_smoothing",
              "grad_clip", "ema", "augment", "seed", "init_from"},
             ctx);
  ProcedureSpec p;
  p.name = name;
  p.model.input_dim = data.num_dims();
  p.model.num_classes = data.num_classes();
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"hidden"}, ctx + " model");
    for (const auto& h : m.value("hidden", ojson::array())) {
      check_keys(h, {"width", "activation"}, ctx + " hidden layer");
      p.model.hidden.push_back(
          {h.at("width").get<std::size_t>(),
           parse_activation(get_or<std::string>(h, "activation", "relu"))});
    }
  }
  if (j.contains("objective")) p.objective = parse_objective(j.at("objective"), ctx);
  p.momentum = get_or(j, "momentum", 0.9);
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    check_keys(s, {"kind", "base_lr", "warmup_steps", "end_fraction"}, ctx + " schedule");
    p.schedule.kind = parse_schedule_kind(get_or<std::string>(s, "kind", "constant"), ctx);
    p.schedule.base_lr = get_or(s, "base_lr", 0.1);
    p.schedule.warmup_steps = get_or<std::size_t>(s, "warmup_steps", 0);
    p.schedule.end_fraction = get_or(s, "end_fraction", 0.0);
  }
  p.epochs = get_opt<std::size_t>(j, "epochs");
  p.update_steps = get_opt<std::size_t>(j, "update_steps");
  p.batch_size = get_or<std::size_t>(j, "batch_size", 32);
  p.weight_decay = get_or(j, "weight_decay", 0.0);
  p.label_smoothing = get_or(j, "label_smoothing", 0.0);
  p.grad_clip = get_opt<double>(j, "grad_clip");
  p.ema_momentum = get_opt<double>(j, "ema");
  if (j.contains("augment") && !j.at("augment").is_null()) {
    const auto& a = j.at("augment");
    check_keys(a, {"kind", "magnitude"}, ctx + " augment");
    p.augment.kind = parse_augment_kind(get_or<std::string>(a, "kind", "none"), ctx);
    p.augment.magnitude = get_or(a, "magnitude", 0.0);
  }
  p.base_seed = get_or<std::uint64_t>(j, "seed", default_seed);
  p.init_from = get_opt<std::string>(j, "init_from");
  p.validate();
  return p;
}

ojson procedure_json(const ProcedureSpec& p) {
  ojson hidden = ojson::array();
  for (const auto& h : p.model.hidden) {
    hidden.push_back({{"width", h.width}, {"activation", to_string(h.activation)}});
  }
  ojson j;
  j["name"] = p.name;
  j["model"] = {{"input_dim", p.model.input_dim},
                {"hidden", hidden},
                {"num_classes", p.model.num_classes}};
  j["objective"] = objective_to_json(p.objective);
  j["momentum"] = p.momentum;
  j["schedule"] = {{"kind", schedule_kind_name(p.schedule.kind)},
                   {"base_lr", p.schedule.base_lr},
                   {"warmup_steps", p.schedule.warmup_steps},
                   {"end_fraction", p.schedule.end_fraction}};
  j["epochs"] = p.epochs ? ojson(*p.epochs) : ojson(nullptr);
  j["update_steps"] = p.update_steps ? ojson(*p.update_steps) : ojson(nullptr);
  j["batch_size"] = p.batch_size;
  j["weight_decay"] = p.weight_decay;
  j["label_smoothing"] = p.label_smoothing;
  j["grad_clip"] = p.grad_clip ? ojson(*p.grad_clip) : ojson(nullptr);
  j["ema"] = p.ema_momentum ? ojson(*p.ema_momentum) : ojson(nullptr);
  j["augment"] = {{"kind", augment_kind_name(p.augment.kind)},
                  {"magnitude", p.augment.magnitude}};
  j["seed"] = p.base_seed;
  j["init_from"] = p.init_from ? ojson(*p.init_from) : ojson(nullptr);
  return j;
}

DatasetSpec parse_dataset(const ojson& j, std::uint64_t default_seed) {
  check_keys(j,
             {"generator", "classes", "dims", "centers_seed", "sigma", "noise",
              "train_size", "K", "unlabeled", "dev", "test", "seed"},
             "dataset");
  DatasetSpec d;
  d.generator = parse_generator(get_or<std::string>(j, "generator", "gauss_mixture"));
  d.classes = get_or<std::size_t>(j, "classes", 3);
  d.dims = get_or<std::size_t>(j, "dims", 2);
  d.centers_seed = get_or<std::uint64_t>(j, "centers_seed", 0);
  d.sigma = get_or(j, "sigma", 1.0);
  d.noise = get_or(j, "noise", 0.1);
  d.train_size = get_or<std::size_t>(j, "train_size", 100);
  d.K = get_or<std::size_t>(j, "K", 1);
  d.unlabeled = get_or<std::size_t>(j, "unlabeled", 0);
  d.dev = get_or<std::size_t>(j, "dev", 0);
  d.test = get_or<std::size_t>(j, "test", 0);
  d.seed = get_or<std::uint64_t>(j, "seed", default_seed);
  d.validate();
  return d;
}

// Axis value labels with their patches, in file order.
std::vector<std::pair<std::string, ojson>> axis_values(const ojson& values,
                                                       const std::string& axis) {
  std::vector<std::pair<std::string, ojson>> out;
  if (values.is_object()) {
    for (const auto& [label, patch] : values.items()) out.emplace_back(label, patch);
  } else if (values.is_array()) {
    for (const auto& v : values) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_string()) {
        throw ConfigError(fmt::format(
            "sweep axis '{}': array values must be [label, patch] pairs", axis));
      }
      out.emplace_back(v[0].get<std::string>(), v[1]);
    }
  } else {
    throw ConfigError(fmt::format("sweep axis '{}': values must be an object", axis));
  }
  if (out.empty()) throw ConfigError(fmt::format("sweep axis '{}' has no values", axis));
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  dataset.validate();
  if (J == 0) throw ConfigError("J must be positive");
  std::set<std::string> names;
  for (const auto& p : procedures) {
    if (p.spec.name.empty()) throw ConfigError("every procedure needs a name");
    if (p.spec.name.find_first_of(",\t\n\r\"/\\") != std::string::npos ||
        p.spec.name == "." || p.spec.name == "..") {
      throw ConfigError(fmt::format(
          "procedure name '{}' must not contain separators or quotes", p.spec.name));
    }
    if (!names.insert(p.spec.name).second) {
      throw ConfigError(fmt::format("duplicate procedure name '{}'", p.spec.name));
    }
    if (p.assignment.size() != axes.size()) {
      throw ConfigError(fmt::format("procedure '{}' does not assign every axis",
                                    p.spec.name));
    }
    if (is_paired(p.spec.objective) && J % 2 != 0) {
      throw ConfigError(fmt::format(
          "procedure '{}' trains pairs; J must be even", p.spec.name));
    }
    if (std::holds_alternative<SemiConsistObjective>(p.spec.objective) &&
        dataset.unlabeled == 0) {
      throw ConfigError(fmt::format(
          "procedure '{}' needs an unlabeled pool", p.spec.name));
    }
  }
  for (std::size_t a = 0; a < axes.size(); ++a) {
    for (const auto& v : axes[a].values) {
      const bool used = std::any_of(procedures.begin(), procedures.end(),
                                    [&](const ProcedureEntry& p) {
                                      return p.assignment[a] == v;
                                    });
      if (!used) {
        throw ConfigError(fmt::format("axis '{}' value '{}' is used by no procedure",
                                      axes[a].name, v));
      }
    }
  }
  if (dataset.test == 0) throw ConfigError("dataset needs a test split");
  if (dataset.unlabeled == 0) {
    throw ConfigError("dataset needs an unlabeled pool for the estimators");
  }
}

const ProcedureEntry* ExperimentConfig::find(const std::string& name) const {
  for (const auto& p : procedures) {
    if (p.spec.name == name) return &p;
  }
  return nullptr;
}

ExperimentConfig parse_config(const std::string& text) {
  ojson root;
  try {
    root = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  try {
    check_keys(root,
               {"name", "seed", "dataset", "J", "procedure", "sweep", "procedures",
                "axes", "metrics", "analysis"},
               "config");
    ExperimentConfig cfg;
    cfg.name = get_or<std::string>(root, "name", "experiment");
    const auto seed = get_or<std::uint64_t>(root, "seed", 0);
    cfg.dataset = parse_dataset(root.value("dataset", ojson::object()), seed);
    cfg.J = get_or<std::size_t>(root, "J", 2);
    ojson defaults = root.value("procedure", ojson::object());

    // Declared axes: sweep axes first, then explicit declarations.
    std::vector<std::vector<std::pair<std::string, ojson>>> sweep_values;
    for (const auto& ax : root.value("sweep", ojson::array())) {
      check_keys(ax, {"axis", "values"}, "sweep entry");
      const auto name = ax.at("axis").get<std::string>();
      auto vals = axis_values(ax.at("values"), name);
      Axis axis{name, {}};
      for (const auto& [label, patch] : vals) axis.values.push_back(label);
      cfg.axes.push_back(std::move(axis));
      sweep_values.push_back(std::move(vals));
    }
    for (const auto& ax : root.value("axes", ojson::array())) {
      check_keys(ax, {"name", "values"}, "axes entry");
      cfg.axes.push_back({ax.at("name").get<std::string>(),
                          ax.at("values").get<std::vector<std::string>>()});
    }
    const auto n_sweep = sweep_values.size();

    if (n_sweep > 0) {
      std::vector<std::size_t> idx(n_sweep, 0);
      while (true) {
        ojson proc = defaults;
        std::vector<std::string> parts, assignment;
        for (std::size_t a = 0; a < n_sweep; ++a) {
          const auto& [label, patch] = sweep_values[a][idx[a]];
          proc.merge_patch(patch);
          parts.push_back(fmt::format("{}-{}", cfg.axes[a].name, label));
          assignment.push_back(label);
        }
        // Explicit axes beyond the sweep take their first declared value.
        for (std::size_t a = n_sweep; a < cfg.axes.size(); ++a) {
          assignment.push_back(cfg.axes[a].values.at(0));
        }
        if (!proc.contains("name")) proc["name"] = fmt::format("{}", fmt::join(parts, "_"));
        cfg.procedures.push_back(
            {parse_procedure(proc, cfg.dataset, seed), std::move(assignment)});
        std::size_t pos = 0;
        while (pos < n_sweep) {
          if (++idx[pos] < sweep_values[pos].size()) break;
          idx[pos] = 0;
          ++pos;
        }
        if (pos == n_sweep) break;
      }
      // Sweep patches must not all share one explicit name.
      if (defaults.contains("name")) {
        throw ConfigError("procedure defaults must not set a name when sweeping");
      }
    }
    for (const auto& pj : root.value("procedures", ojson::array())) {
      ojson proc = defaults;
      proc.merge_patch(pj);
      std::vector<std::string> assignment;
      const auto axes_j = pj.value("axes", ojson::object());
      for (const auto& axis : cfg.axes) {
        if (!axes_j.contains(axis.name)) {
          throw ConfigError(fmt::format("procedure '{}' does not assign axis '{}'",
                                        pj.value("name", std::string()), axis.name));
        }
        assignment.push_back(axes_j.at(axis.name).get<std::string>());
        if (std::find(axis.values.begin(), axis.values.end(), assignment.back()) ==
            axis.values.end()) {
          throw ConfigError(fmt::format("procedure '{}': '{}' is not a value of axis '{}'",
                                        pj.value("name", std::string()),
                                        assignment.back(), axis.name));
        }
      }
      proc.erase("axes");
      cfg.procedures.push_back(
          {parse_procedure(proc, cfg.dataset, seed), std::move(assignment)});
    }

    const auto m = root.value("metrics", ojson::object());
    check_keys(m, {"sharpness_rho", "hessian", "hessian_max_iters", "hessian_tol",
                   "info", "gamma"},
               "metrics");
    cfg.metrics.sharpness_rho = get_opt<double>(m, "sharpness_rho");
    cfg.metrics.hessian = get_or(m, "hessian", false);
    cfg.metrics.power_iteration.max_iters =
        get_or<std::size_t>(m, "hessian_max_iters", 200);
    cfg.metrics.power_iteration.tol = get_or(m, "hessian_tol", 1e-6);
    cfg.metrics.power_iteration.seed = seed;
    cfg.metrics.info = get_opt<double>(m, "info");
    cfg.metrics.gamma = get_or(m, "gamma", 1.0);

    const auto an = root.value("analysis", ojson::object());
    check_keys(an, {"quantities", "targets", "max_condition_size", "trainloss_cutoff"},
               "analysis");
    if (an.contains("quantities")) {
      cfg.analysis.quantities = an.at("quantities").get<std::vector<std::string>>();
    }
    if (an.contains("targets")) {
      cfg.analysis.targets = an.at("targets").get<std::vector<std::string>>();
    }
    cfg.analysis.max_condition_size = get_or<std::size_t>(an, "max_condition_size", 2);
    cfg.analysis.trainloss_cutoff = get_opt<double>(an, "trainloss_cutoff");

    cfg.validate();
    return cfg;
  } catch (const ojson::exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

void apply_seed_override(ExperimentConfig& config, std::uint64_t seed) {
  config.dataset.seed = seed;
  config.metrics.power_iteration.seed = seed;
  for (auto& p : config.procedures) p.spec.base_seed = seed;
}

std::string procedure_to_json(const ProcedureSpec& proc) {
  return procedure_json(proc).dump();
}

std::string dataset_to_json(const DatasetSpec& d) {
  ojson j{{"generator", to_string(d.generator)},
          {"classes", d.classes},
          {"dims", d.dims},
          {"centers_seed", d.centers_seed},
          {"sigma", d.sigma},
          {"noise", d.noise},
          {"train_size", d.train_size},
          {"K", d.K},
          {"unlabeled", d.unlabeled},
          {"dev", d.dev},
          {"test", d.test},
          {"seed", d.seed}};
  return j.dump();
}

AxesSpec axes_of(const ExperimentConfig& config) {
  AxesSpec out;
  out.axes = config.axes;
  for (const auto& p : config.procedures) {
    out.assignments.emplace_back(p.spec.name, p.assignment);
  }
  return out;
}

std::string axes_to_json(const AxesSpec& spec) {
  ojson j;
  ojson axes = ojson::array();
  for (const auto& a : spec.axes) axes.push_back({{"name", a.name}, {"values", a.values}});
  j["axes"] = axes;
  ojson assign = ojson::object();
  for (const auto& [name, values] : spec.assignments) {
    ojson row = ojson::object();
    for (std::size_t a = 0; a < spec.axes.size(); ++a) row[spec.axes[a].name] = values[a];
    assign[name] = row;
  }
  j["assignments"] = assign;
  return j.dump(2);
}

AxesSpec parse_axes(const std::string& text) {
  ojson root;
  try {
    root = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ConfigError(fmt::format("axes file is not valid JSON: {}", e.what()));
  }
  if (root.contains("dataset") || root.contains("sweep") || root.contains("procedures")) {
    return axes_of(parse_config(text));
  }
  try {
    AxesSpec out;
    for (const auto& a : root.at("axes")) {
      out.axes.push_back({a.at("name").get<std::string>(),
                          a.at("values").get<std::vector<std::string>>()});
    }
    for (const auto& [name, row] : root.at("assignments").items()) {
      std::vector<std::string> values;
      for (const auto& axis : out.axes) values.push_back(row.at(axis.name).get<std::string>());
      out.assignments.emplace_back(name, std::move(values));
    }
    return out;
  } catch (const ojson::exception& e) {
    throw ConfigError(fmt::format("axes file: {}", e.what()));
  }
}

}  // namespace gengap
