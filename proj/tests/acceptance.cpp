// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Pass criterion numbers as arguments to run
// a subset.

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "gengap/analytics.hpp"
#include "gengap/autodiff.hpp"
#include "gengap/checkpoint.hpp"
#include "gengap/config.hpp"
#include "gengap/dataset.hpp"
#include "gengap/errors.hpp"
#include "gengap/experiment.hpp"
#include "gengap/grid.hpp"
#include "gengap/metrics.hpp"
#include "gengap/model.hpp"
#include "gengap/report.hpp"
#include "gengap/rng.hpp"
#include "oracles.hpp"

using namespace gengap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("gengap_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

LabeledSet random_set(RandomStream& rng, std::size_t n, std::size_t dims,
                      std::size_t classes) {
  LabeledSet s;
  s.features = Tensor({n, dims});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < dims; ++c) s.features.at(i, c) = rng.normal();
    s.labels.push_back(static_cast<std::size_t>(rng.below(classes)));
  }
  return s;
}

// ---------------------------------------------------------------------------

Outcome autodiff_soundness() {
  RandomStream rng(2024);
  double worst = 0.0;
  std::size_t models = 0;
  while (models < 100) {
    ModelSpec spec;
    spec.input_dim = 1 + rng.below(4);
    spec.num_classes = 2 + rng.below(3);
    const auto depth = rng.below(3);
    for (std::size_t l = 0; l < depth; ++l) {
      spec.hidden.push_back(
          {1 + rng.below(8), rng.below(2) ? Activation::kTanh : Activation::kRelu});
    }
    auto params = init_params(spec, rng.next());
    if (params.size() > 200) continue;
    ++models;
    // Non-zero biases move ReLU kinks away from the origin.
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += 0.1 * rng.normal();
    const auto data = random_set(rng, 2 + rng.below(6), spec.input_dim, spec.num_classes);
    const auto loss = mean_cross_entropy_loss(spec, data);
    const auto g = gradient(loss, params);
    const auto fd = oracle::central_difference(
        [&](const oracle::Vec& x) {
          auto p = params;
          for (std::size_t i = 0; i < x.size(); ++i) p[i] = x[i];
          return evaluate(loss, p);
        },
        oracle::Vec(params.values().begin(), params.values().end()), 1e-6);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double scale = std::max({std::abs(g[i]), std::abs(fd[i]), 1e-6});
      worst = std::max(worst, std::abs(g[i] - fd[i]) / scale);
    }
  }
  return {worst < 1e-5, fmt::format("max relative error {:.3g} over 100 models", worst)};
}

// ---------------------------------------------------------------------------

PredictionMatrix random_predictions(RandomStream& rng, std::size_t K, std::size_t J,
                                    std::size_t points, std::size_t classes,
                                    bool paired) {
  PredictionMatrix m;
  m.eval_set_id = "random";
  m.num_points = points;
  m.num_classes = classes;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < J; ++j) {
      const std::uint64_t run = k * J + (paired ? j - j % 2 : j);
      m.lineage.push_back(
          {"p", static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(j), run});
      for (std::size_t x = 0; x < points; ++x) {
        std::vector<double> p(classes);
        double s = 0.0;
        for (auto& v : p) s += (v = std::pow(rng.uniform(), 3.0) + 1e-9);
        for (auto& v : p) m.probs.push_back(v / s);
      }
    }
  }
  return m;
}

oracle::Grid grid_of(const PredictionMatrix& m) {
  oracle::Grid g;
  for (std::size_t r = 0; r < m.num_models(); ++r) {
    g.k.push_back(m.lineage[r].k);
    g.run.push_back(m.lineage[r].run_id);
    oracle::Mat rows;
    for (std::size_t x = 0; x < m.num_points; ++x) {
      const auto p = m.at(r, x);
      rows.emplace_back(p.begin(), p.end());
    }
    g.probs.push_back(rows);
  }
  return g;
}

// Compares two computations that may both legitimately refuse the input.
struct Agreement {
  double worst = 0.0;
  std::size_t compared = 0;
  std::size_t both_refused = 0;
  std::vector<std::string> mismatches;

  void check(const std::string& what, const std::function<double()>& lib,
             const std::function<double()>& ref) {
    std::optional<double> a, b;
    try {
      a = lib();
    } catch (const Error&) {
    }
    try {
      b = ref();
    } catch (const std::domain_error&) {
    }
    if (!a && !b) {
      ++both_refused;
    } else if (!a || !b) {
      mismatches.push_back(what + (a ? ": oracle refused" : ": library refused"));
    } else {
      ++compared;
      worst = std::max(worst, std::abs(*a - *b));
    }
  }
};

Outcome estimator_equivalence() {
  RandomStream rng(77);
  Agreement agree;
  for (std::size_t K = 1; K <= 3; ++K) {
    for (std::size_t J = 1; J <= 3; ++J) {
      for (std::size_t pts = 1; pts <= 5; ++pts) {
        for (int paired = 0; paired <= 1; ++paired) {
          for (int trial = 0; trial < 4; ++trial) {
            const auto m = random_predictions(rng, K, J, pts, 2 + trial % 3, paired);
            const auto g = grid_of(m);
            const auto tag = fmt::format("K={} J={} pts={} paired={}", K, J, pts, paired);
            agree.check(tag + " inconsistency", [&] { return estimate_inconsistency(m); },
                        [&] { return oracle::inconsistency(g); });
            agree.check(tag + " instability", [&] { return estimate_instability(m); },
                        [&] { return oracle::instability(g); });
            agree.check(tag + " disagreement", [&] { return estimate_disagreement(m); },
                        [&] { return oracle::disagreement(g); });
            const auto one = one_norm_variants(m);
            agree.check(tag + " C1",
                        [&] {
                          if (!one.inconsistency) throw DegenerateInputError("C1");
                          return *one.inconsistency;
                        },
                        [&] { return oracle::c1(g); });
            agree.check(tag + " S1",
                        [&] {
                          if (!one.instability) throw DegenerateInputError("S1");
                          return *one.instability;
                        },
                        [&] { return oracle::s1(g); });
            for (std::size_t r = 0; r < m.num_models(); ++r) {
              agree.check(tag + " model-wise inconsistency",
                          [&] { return modelwise_inconsistency(m, r); },
                          [&] { return oracle::modelwise(g, r, oracle::kl); });
              agree.check(tag + " model-wise disagreement",
                          [&] { return modelwise_disagreement(m, r); }, [&] {
                            return oracle::modelwise(g, r, [](const auto& p, const auto& q) {
                              return oracle::first_max(p) != oracle::first_max(q) ? 1.0 : 0.0;
                            });
                          });
            }
          }
        }
      }
    }
  }
  const bool pass = agree.mismatches.empty() && agree.worst <= 1e-12;
  auto detail = fmt::format("{} values compared, {} refused by both, max abs diff {:.3g}",
                            agree.compared, agree.both_refused, agree.worst);
  if (!agree.mismatches.empty()) detail += "; first mismatch: " + agree.mismatches[0];
  return {pass, detail};
}

// ---------------------------------------------------------------------------

Outcome bound_correctness() {
  const bool a = bound_rhs({0.0, 0.0, 100.0, 1.0}).value == 0.0;

  RandomStream rng(5);
  double worst_b = -1e300;
  for (int t = 0; t < 1000; ++t) {
    BoundInputs in;
    in.D = std::exp(rng.uniform(std::log(1e-4), std::log(2.0)));
    in.gamma = rng.uniform(0.2, 3.0);
    in.n = std::floor(std::exp(rng.uniform(0.0, std::log(1e5)))) + 1.0;
    in.I = rng.uniform() * in.n * in.gamma * in.gamma * in.D;
    worst_b = std::max(worst_b, bound_rhs(in).value - simplified_bound(in));
  }
  const bool b = worst_b <= 1e-9;

  double worst_c = 0.0;
  const std::size_t grid = 1'000'000;
  const double lo = std::log(kBoundLambdaMin);
  const double hi = std::log(kBoundLambdaMax);
  for (int t = 0; t < 10; ++t) {
    BoundInputs in;
    in.D = std::exp(rng.uniform(std::log(1e-3), std::log(1.0)));
    in.gamma = rng.uniform(0.5, 2.0);
    in.n = std::floor(rng.uniform(10.0, 1e4));
    in.I = rng.uniform(0.01, 5.0);
    double best = 1e300;
    for (std::size_t i = 0; i < grid; ++i) {
      const double l = std::exp(lo + (hi - lo) * static_cast<double>(i) / (grid - 1));
      best = std::min(best, bound_objective(in, l));
    }
    worst_c = std::max(worst_c, std::abs(bound_rhs(in).value - best) / best);
  }
  const bool c = worst_c <= 1e-6;
  return {a && b && c,
          fmt::format("(a) {} (b) max rhs - simplified {:.3g} (c) max rel diff vs grid {:.3g}",
                      a ? "ok" : "nonzero", worst_b, worst_c)};
}

// ---------------------------------------------------------------------------

Outcome psi_properties() {
  const double at1 = std::abs(psi(1.0) - (std::exp(1.0) - 2.0));
  bool increasing = true;
  double prev = psi(1e-6);
  for (int i = 1; i <= 10000; ++i) {
    const double v = psi(1e-6 + (10.0 - 1e-6) * i / 10000.0);
    increasing &= v > prev;
    prev = v;
  }
  const double small = std::abs(psi(1e-8) - 0.5);
  return {at1 <= 1e-12 && increasing && small <= 1e-9,
          fmt::format("|psi(1)-(e-2)| {:.3g}, increasing {}, |psi(1e-8)-0.5| {:.3g}", at1,
                      increasing, small)};
}

// ---------------------------------------------------------------------------

Outcome sharpness() {
  RandomStream rng(31);
  double worst_eig = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng.below(49);
    oracle::Mat B(n, oracle::Vec(n));
    for (auto& row : B) {
      for (auto& v : row) v = rng.normal();
    }
    // Wishart matrices, negated half the time so the dominant eigenvalue
    // is negative.
    const double sign = t % 2 ? -1.0 : 1.0;
    Tensor A({n, n});
    oracle::Mat dense(n, oracle::Vec(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += B[i][k] * B[j][k];
        dense[i][j] = A.at(i, j) = sign * s / static_cast<double>(n);
      }
    }
    const LossFn quad = [&](ad::Tape&, ad::Var th) {
      auto Av = ad::reshape(ad::matmul(A, ad::reshape(th, {n, 1})), {n});
      return ad::scale(ad::dot(th, Av), 0.5);
    };
    const auto eig = oracle::symmetric_eigenvalues(dense);
    const double want =
        std::abs(eig.back()) >= std::abs(eig.front()) ? eig.back() : eig.front();
    PowerIterationOptions opts;
    opts.max_iters = 20000;
    opts.tol = 1e-10;
    opts.seed = static_cast<std::uint64_t>(t);
    std::vector<double> at(n);
    for (auto& v : at) v = rng.normal();
    const double got = hessian_top_eigenvalue(quad, ParamVector::flat(at), opts);
    worst_eig = std::max(worst_eig, std::abs(got - want) / std::abs(want));
  }

  double worst_sharp = 0.0;
  for (int t = 0; t < 10; ++t) {
    const ModelSpec spec{3, {{8, Activation::kTanh}}, 3};
    const Model model{spec, init_params(spec, 100 + t), {}};
    const auto data = random_set(rng, 20, 3, 3);
    const double rho = 1e-4;
    const double s = one_sharpness(model, data, rho) / rho;
    const double norm = mean_example_gradient_norm(model, data);
    worst_sharp = std::max(worst_sharp, std::abs(s - norm) / norm);
  }
  return {worst_eig <= 1e-3 && worst_sharp <= 0.05,
          fmt::format("power iteration max rel err {:.3g} over 20 quadratics; "
                      "1-sharpness/rho vs gradient norm max rel diff {:.3g}",
                      worst_eig, worst_sharp)};
}

// ---------------------------------------------------------------------------

Outcome analytics_equivalence() {
  RandomStream rng(404);
  Agreement agree;
  for (int t = 0; t < 50; ++t) {
    // Up to three axes whose full product has at most eight cells.
    std::vector<Axis> axes;
    std::size_t cells = 1;
    const auto n_axes = 1 + rng.below(3);
    for (std::size_t a = 0; a < n_axes; ++a) {
      const std::size_t room = 8 / cells;
      const std::size_t count = std::max<std::size_t>(
          1, std::min<std::size_t>(room, 2 + rng.below(3)));
      Axis axis{fmt::format("a{}", a), {}};
      for (std::size_t v = 0; v < count; ++v) axis.values.push_back(fmt::format("v{}", v));
      cells *= count;
      axes.push_back(axis);
    }
    if (cells < 3) {
      axes[0].values.push_back("extra");
      cells = cells / (axes[0].values.size() - 1) * axes[0].values.size();
    }
    ProcedureTable table(axes);
    std::vector<oracle::Row> rows;
    // Coarse values produce ties on some tables.
    const bool coarse = t % 3 == 0;
    for (std::size_t c = 0; c < cells; ++c) {
      std::vector<std::string> assignment;
      std::size_t rest = c;
      for (const auto& axis : axes) {
        assignment.push_back(axis.values[rest % axis.values.size()]);
        rest /= axis.values.size();
      }
      const double mu = coarse ? static_cast<double>(rng.below(3)) : rng.normal();
      const double g = coarse ? static_cast<double>(rng.below(3)) : rng.normal();
      table.add({fmt::format("p{}", c), assignment, mu, g});
      rows.push_back({assignment, mu, g});
    }
    std::vector<double> mu, g;
    for (const auto& r : rows) {
      mu.push_back(r.mu);
      g.push_back(r.g);
    }
    const auto tag = fmt::format("table {}", t);
    agree.check(tag + " tau", [&] { return kendall_tau(mu, g); },
                [&] { return oracle::tau(rows); });
    agree.check(tag + " Psi", [&] { return granulated_kendall(table).Psi; },
                [&] { return oracle::psi(rows, n_axes).first; });
    for (std::size_t a = 0; a < n_axes; ++a) {
      agree.check(tag + " psi_i",
                  [&] {
                    const auto v = granulated_kendall(table).per_axis[a];
                    if (!v) throw DegenerateInputError("undefined");
                    return *v;
                  },
                  [&] {
                    const auto v = oracle::psi(rows, n_axes).second[a];
                    if (!v) throw std::domain_error("undefined");
                    return *v;
                  });
    }
    const auto max_cond = n_axes - 1;
    agree.check(tag + " kappa", [&] { return mi_kappa(table, max_cond).kappa; },
                [&] { return oracle::kappa(rows, n_axes, max_cond).kappa; });
    agree.check(tag + " kappa S={}", [&] { return mi_kappa(table, 0).kappa_s0; },
                [&] { return oracle::kappa_for(rows, {}); });
    agree.check(tag + " loo", [&] { return loo_linear_prediction_error(mu, g); },
                [&] {
                  // Coarse tables can leave a fold without x variance.
                  for (std::size_t i = 0; i < mu.size(); ++i) {
                    std::set<double> xs;
                    for (std::size_t k = 0; k < mu.size(); ++k) {
                      if (k != i) xs.insert(mu[k]);
                    }
                    if (xs.size() < 2) throw std::domain_error("flat fold");
                  }
                  return oracle::loo(mu, g);
                });
  }

  // Pure noise: targets unrelated to the quantity.
  std::vector<double> noise_scores;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(8), y(8);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    noise_scores.push_back(loo_linear_prediction_error(x, y));
  }
  const double noise = mean(noise_scores);
  const bool pass = agree.mismatches.empty() && agree.worst <= 1e-12 && noise >= 0.8 &&
                    noise <= 1.2;
  auto detail = fmt::format(
      "{} values compared, {} refused by both, max abs diff {:.3g}; "
      "mean LOO error on noise {:.3f}",
      agree.compared, agree.both_refused, agree.worst, noise);
  if (!agree.mismatches.empty()) detail += "; first mismatch: " + agree.mismatches[0];
  return {pass, detail};
}

// ---------------------------------------------------------------------------

const fs::path kToySweep = fs::path(GENGAP_SOURCE_DIR) / "configs" / "toy_sweep.json";

std::vector<MetricRow> aggregates(const fs::path& out) {
  std::vector<MetricRow> rows;
  for (auto& r : parse_metrics_csv(read_file(ExperimentLayout(out).metrics()))) {
    if (r.is_aggregate()) rows.push_back(std::move(r));
  }
  return rows;
}

Outcome toy_sweep_ranking() {
  std::vector<double> taus;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto cfg = load_config(kToySweep);
    apply_seed_override(cfg, seed);
    const auto out = scratch(fmt::format("sweep_{}", seed));
    if (!run_experiment(cfg, out).ok()) return {false, "sweep had failed cells"};
    const auto rows = aggregates(out);
    bool all_ema = true;
    for (const auto& p : cfg.procedures) all_ema &= p.spec.ema_momentum.has_value();
    if (rows.size() < 8 || !all_ema || cfg.dataset.K != 4 || cfg.J != 4) {
      return {false, "toy sweep config does not meet the required shape"};
    }
    std::vector<double> D, gap;
    for (const auto& r : rows) {
      D.push_back(*r.D);
      gap.push_back(*r.gap);
    }
    taus.push_back(kendall_tau(D, gap));
    per_seed += fmt::format(" {:.3f}", taus.back());
    fs::remove_all(out);
  }
  const double avg = mean(taus);
  return {avg >= 0.4, fmt::format("tau(D, gap) per seed{}, mean {:.3f}", per_seed, avg)};
}

// ---------------------------------------------------------------------------

DatasetSpec toy_data(std::uint64_t seed) {
  DatasetSpec d;
  d.generator = Generator::kGaussMixture;
  d.classes = 3;
  d.dims = 2;
  d.centers_seed = 11;
  d.sigma = 0.9;
  d.train_size = 60;
  d.K = 1;
  d.unlabeled = 300;
  d.test = 1000;
  d.seed = seed;
  return d;
}

ProcedureSpec toy_procedure(std::size_t width, std::size_t epochs, double lr) {
  ProcedureSpec p;
  p.name = "toy";
  p.model = ModelSpec{2, {{width, Activation::kRelu}}, 3};
  p.epochs = epochs;
  p.batch_size = 16;
  p.schedule.base_lr = lr;
  return p;
}

struct GroupStats {
  double inconsistency = 0.0;  // mean model-wise, on the unlabeled pool
  double test_error = 0.0;     // mean over models
};

GroupStats group_stats(const std::vector<Model>& models, const DatasetBundle& data) {
  const auto preds = predict_matrix(models, data.unlabeled(), "unlabeled");
  const auto test = data.test();
  std::vector<double> inc, err;
  for (std::size_t r = 0; r < models.size(); ++r) {
    inc.push_back(modelwise_inconsistency(preds, r));
    err.push_back(eval_loss_error(models[r], test).error);
  }
  return {mean(inc), mean(err)};
}

Outcome codistillation() {
  std::vector<double> inc0, inc1, err0, err1;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const auto data = generate_dataset(toy_data(100 + rep));
    const auto sets = data.train_sets();
    for (double beta : {0.0, 1.0}) {
      // Simultaneous updates chase a moving target; with large effective
      // steps the pair oscillates instead of settling, so the step is small.
      auto proc = toy_procedure(32, 200, 0.02);
      proc.objective = ConsistObjective{beta};
      proc.base_seed = 500 + rep;
      const auto grid = train_grid(proc, sets, 4);
      require_complete(grid);
      const auto s = group_stats(grid.models, data);
      (beta == 0.0 ? inc0 : inc1).push_back(s.inconsistency);
      (beta == 0.0 ? err0 : err1).push_back(s.test_error);
    }
  }
  const double i0 = mean(inc0), i1 = mean(inc1), e0 = mean(err0), e1 = mean(err1);
  const double reduction = 1.0 - i1 / i0;
  return {i1 < i0 && reduction >= 0.2 && e1 <= e0 + 0.005,
          fmt::format("inconsistency {:.4f} -> {:.4f} ({:.1f}% lower), "
                      "test error {:.4f} -> {:.4f}",
                      i0, i1, 100.0 * reduction, e0, e1)};
}

// ---------------------------------------------------------------------------

Outcome sam_sharpness() {
  const double rho = 0.1;
  std::vector<double> plain, sam;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const auto data = generate_dataset(toy_data(200 + rep));
    const auto sets = data.train_sets();
    for (double r : {0.0, rho}) {
      auto proc = toy_procedure(16, 200, 0.02);
      proc.objective = SamObjective{r, 4};
      proc.base_seed = 900 + rep;
      const auto grid = train_grid(proc, sets, 1);
      require_complete(grid);
      PowerIterationOptions opts;
      opts.max_iters = 2000;
      opts.tol = 1e-8;
      (r == 0.0 ? plain : sam).push_back(
          hessian_top_eigenvalue(grid.models[0], sets[0], opts));
    }
  }
  const double p = mean(plain), s = mean(sam);
  const double reduction = 1.0 - s / p;
  return {reduction >= 0.1,
          fmt::format("rho={} mean top Hessian eigenvalue {:.4f} -> {:.4f} ({:.1f}% lower)", rho,
                      p, s, 100.0 * reduction)};
}

// ---------------------------------------------------------------------------

Outcome ensembles() {
  std::vector<double> inc_gain, err_gain;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const auto data = generate_dataset(toy_data(300 + rep));
    // A large constant step leaves noisy final iterates, the variance an
    // ensemble averages out.
    auto proc = toy_procedure(32, 100, 0.2);
    proc.base_seed = 1300 + rep;
    const auto grid = train_grid(proc, data.train_sets(), 8);
    require_complete(grid);
    const auto members = group_stats(grid.models, data);

    // Four disjoint pairs; each ensemble is compared against the others.
    const auto pool = data.unlabeled();
    const auto test = data.test();
    PredictionMatrix preds;
    preds.eval_set_id = "unlabeled";
    preds.num_points = pool.rows();
    preds.num_classes = 3;
    std::vector<double> errs;
    for (std::uint32_t e = 0; e < 4; ++e) {
      const std::vector<Model> pair{grid.models[2 * e], grid.models[2 * e + 1]};
      const auto probs = ensemble_predict(pair, pool);
      preds.lineage.push_back({"ensemble", 0, e, e});
      preds.probs.insert(preds.probs.end(), probs.data().begin(), probs.data().end());
      errs.push_back(eval_loss_error(ensemble_predict(pair, test.features), test.labels).error);
    }
    std::vector<double> inc;
    for (std::size_t r = 0; r < 4; ++r) inc.push_back(modelwise_inconsistency(preds, r));
    inc_gain.push_back(members.inconsistency - mean(inc));
    err_gain.push_back(members.test_error - mean(errs));
  }
  const double di = mean(inc_gain), de = mean(err_gain);
  return {di > 0.0 && de > 0.0,
          fmt::format("mean reduction vs members: inconsistency {:.3g}, test error {:.3g}", di,
                      de)};
}

// ---------------------------------------------------------------------------

Outcome determinism() {
  const auto cfg = load_config(kToySweep);
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  StepOptions parallel;
  parallel.jobs = 3;
  const bool ok = run_experiment(cfg, a).ok() && run_experiment(cfg, b, parallel).ok();
  const auto ma = read_file(ExperimentLayout(a).metrics());
  const auto mb = read_file(ExperimentLayout(b).metrics());
  fs::remove_all(a);
  fs::remove_all(b);
  return {ok && ma == mb && !ma.empty(),
          fmt::format("metrics.csv {} bytes, {}", ma.size(),
                      ma == mb ? "byte-identical" : "differs")};
}

struct Criterion {
  int id;
  const char* title;
  double budget_seconds;  // 0 means no stated budget
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "autodiff soundness", 10, autodiff_soundness},
      {2, "estimator-oracle equivalence", 5, estimator_equivalence},
      {3, "bound correctness", 30, bound_correctness},
      {4, "psi properties", 0, psi_properties},
      {5, "sharpness", 0, sharpness},
      {6, "analytics-oracle equivalence", 0, analytics_equivalence},
      {7, "toy sweep ranks the gap by D", 600, toy_sweep_ranking},
      {8, "co-distillation lowers inconsistency", 300, codistillation},
      {9, "SAM lowers sharpness", 300, sam_sharpness},
      {10, "ensembles beat their members", 0, ensembles},
      {11, "determinism", 0, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      o.pass = false;
      o.detail += fmt::format("; over the {:.0f} s budget", c.budget_seconds);
    }
    fmt::print("{} criterion {:2}: {}: {} [{:.2f} s]\n", o.pass ? "PASS" : "FAIL", c.id,
               c.title, o.detail, secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
