#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "gengap/checkpoint.hpp"
#include "gengap/config.hpp"
#include "gengap/dataset.hpp"
#include "gengap/errors.hpp"
#include "gengap/experiment.hpp"
#include "gengap/report.hpp"

using namespace gengap;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("gengap_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* kTinyConfig = R"({
  "name": "tiny",
  "seed": 5,
  "dataset": {"generator": "rings", "noise": 0.05, "train_size": 24, "K": 1,
              "unlabeled": 30, "test": 30},
  "J": 2,
  "procedures": [
    {"name": "only", "model": {"hidden": [{"width": 4}]}, "epochs": 2, "batch_size": 8}
  ]
})";

const char* kSweepConfig = R"({
  "name": "sweep",
  "seed": 1,
  "dataset": {"generator": "gauss_mixture", "classes": 3, "sigma": 0.8,
              "centers_seed": 2, "train_size": 30, "K": 2, "unlabeled": 60, "test": 60},
  "J": 2,
  "procedure": {"model": {"hidden": [{"width": 6}]}, "batch_size": 10,
                "schedule": {"base_lr": 0.05}},
  "sweep": [
    {"axis": "lr", "values": {"low": {"schedule": {"base_lr": 0.02}},
                              "high": {"schedule": {"base_lr": 0.2}}}},
    {"axis": "length", "values": {"short": {"epochs": 2}, "long": {"epochs": 8}}},
    {"axis": "ema", "values": {"off": {}, "on": {"ema": 0.9}}}
  ]
})";

std::size_t count_aggregates(const std::vector<MetricRow>& rows) {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const MetricRow& r) { return r.is_aggregate(); }));
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("datasets are deterministic, disjoint and balanced") {
    DatasetSpec spec;
    spec.generator = Generator::kGaussMixture;
    spec.classes = 3;
    spec.dims = 4;
    spec.train_size = 50;
    spec.K = 3;
    spec.unlabeled = 40;
    spec.dev = 20;
    spec.test = 31;
    spec.seed = 12;
    const auto a = generate_dataset(spec);
    CHECK(encode_dataset(a) == encode_dataset(generate_dataset(spec)));
    spec.seed = 13;
    CHECK(encode_dataset(a) != encode_dataset(generate_dataset(spec)));

    std::vector<std::vector<std::size_t>> splits = a.train_indices;
    splits.push_back(a.unlabeled_indices);
    splits.push_back(a.dev_indices);
    splits.push_back(a.test_indices);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& s : splits) {
      seen.insert(s.begin(), s.end());
      total += s.size();
      std::vector<std::size_t> counts(3, 0);
      for (auto i : s) ++counts[a.labels[i]];
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      CHECK(*hi - *lo <= 1);
    }
    CHECK(seen.size() == total);
    CHECK(a.features.rows() == total);
    const auto back = decode_dataset(encode_dataset(a));
    CHECK(back.features == a.features);
    CHECK(back.train_indices == a.train_indices);
  }

  TEST_CASE("four training sets of 4000 are pairwise disjoint") {
    DatasetSpec spec;
    spec.generator = Generator::kTwoMoons;
    spec.train_size = 4000;
    spec.K = 4;
    spec.test = 10;
    spec.unlabeled = 10;
    const auto d = generate_dataset(spec);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(d.train_indices[i].size() == 4000);
      for (std::size_t j = i + 1; j < 4; ++j) {
        std::vector<std::size_t> a = d.train_indices[i], b = d.train_indices[j], both;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
        CHECK(both.empty());
      }
    }
  }

  TEST_CASE("tight gaussian mixtures are separable by nearest neighbour") {
    DatasetSpec spec;
    spec.classes = 4;
    spec.dims = 3;
    spec.sigma = 1e-4;
    spec.train_size = 40;
    spec.test = 40;
    spec.unlabeled = 1;
    const auto d = generate_dataset(spec);
    const auto train = d.train(0);
    const auto test = d.test();
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      double best = 1e300;
      std::size_t label = 0;
      for (std::size_t j = 0; j < train.size(); ++j) {
        double dist = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double diff = test.features.at(i, c) - train.features.at(j, c);
          dist += diff * diff;
        }
        if (dist < best) {
          best = dist;
          label = train.labels[j];
        }
      }
      wrong += label != test.labels[i];
    }
    CHECK(wrong == 0);
  }

  TEST_CASE("config sweep expansion") {
    const auto cfg = parse_config(kSweepConfig);
    REQUIRE(cfg.procedures.size() == 8);
    REQUIRE(cfg.axes.size() == 3);
    CHECK(cfg.axes[0].name == "lr");
    CHECK(cfg.axes[0].values == std::vector<std::string>{"low", "high"});
    const auto* p = cfg.find("lr-high_length-long_ema-on");
    REQUIRE(p != nullptr);
    CHECK(p->spec.schedule.base_lr == 0.2);
    CHECK(*p->spec.epochs == 8);
    CHECK(*p->spec.ema_momentum == 0.9);
    CHECK(p->spec.model.input_dim == 2);
    CHECK(p->spec.model.num_classes == 3);
    CHECK(p->assignment == std::vector<std::string>{"high", "long", "on"});
    CHECK(!cfg.find("lr-low_length-short_ema-off")->spec.ema_momentum);

    const auto axes = axes_of(cfg);
    const auto back = parse_axes(axes_to_json(axes));
    CHECK(back.assignments == axes.assignments);
    CHECK(back.axes[2].values == axes.axes[2].values);
    CHECK(parse_axes(kSweepConfig).assignments == axes.assignments);
  }

  TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"dataset": {"test": 5, "unlabeled": 5}, "typo": 1})"),
                    ConfigError);
    // Duplicate names.
    CHECK_THROWS_AS(parse_config(R"({"dataset": {"test": 5, "unlabeled": 5},
        "procedures": [{"name": "a", "epochs": 1}, {"name": "a", "epochs": 2}]})"),
                    ConfigError);
    // Declared axis value used by no procedure.
    CHECK_THROWS_AS(parse_config(R"({"dataset": {"test": 5, "unlabeled": 5},
        "axes": [{"name": "x", "values": ["1", "2"]}],
        "procedures": [{"name": "a", "axes": {"x": "1"}, "epochs": 1}]})"),
                    ConfigError);
    // Paired objective with odd J.
    CHECK_THROWS_AS(parse_config(R"({"dataset": {"test": 5, "unlabeled": 5}, "J": 3,
        "procedures": [{"name": "a", "objective": "consist", "epochs": 1}]})"),
                    ConfigError);
    // Missing training length.
    CHECK_THROWS_AS(parse_config(R"({"dataset": {"test": 5, "unlabeled": 5},
        "procedures": [{"name": "a"}]})"),
                    ConfigError);
  }

  TEST_CASE("seed override replaces every seed") {
    auto cfg = parse_config(kSweepConfig);
    apply_seed_override(cfg, 99);
    CHECK(cfg.dataset.seed == 99);
    for (const auto& p : cfg.procedures) CHECK(p.spec.base_seed == 99);
  }

  TEST_CASE("metrics csv round-trip and column checks") {
    MetricRow agg;
    agg.procedure = "p";
    agg.n = 10;
    agg.train_loss = 0.1;
    agg.test_loss = 0.30000000000000004;
    agg.gap = *agg.test_loss - *agg.train_loss;
    MetricRow m = agg;
    m.model = "0_1";
    m.k = 0;
    m.j = 1;
    m.run_id = 1;
    m.inconsistency = 1e-300;
    const std::vector<MetricRow> rows{agg, m};
    const auto csv = format_metrics_csv(rows);
    const auto back = parse_metrics_csv(csv);
    REQUIRE(back.size() == 2);
    CHECK(*back[0].gap == *agg.gap);
    CHECK(*back[0].test_loss - *back[0].train_loss == *back[0].gap);
    CHECK(*back[1].inconsistency == 1e-300);
    CHECK(!back[0].k);
    CHECK(!back[0].disagreement);
    CHECK(format_metrics_csv(back) == csv);
    CHECK(csv.substr(0, csv.find('\n')) ==
          "procedure,model,k,j,run_id,n,train_loss,test_loss,gap,train_err,test_err,"
          "inconsistency,instability,D,disagreement,c1,s1,one_sharpness,hessian_eig,"
          "bound_lambda,bound_value");
    CHECK_THROWS_AS(parse_metrics_csv("procedure,model\np,aggregate\n"), FormatError);
  }

  TEST_CASE("plot series") {
    for (const auto& f : plot_families()) {
      const auto empty = format_plot_series(f, std::vector<MetricRow>{});
      CHECK(std::count(empty.begin(), empty.end(), '\n') == 1);
    }
    MetricRow r;
    r.procedure = "p";
    r.D = 0.5;
    r.gap = 0.2;
    const auto one = format_plot_series(plot_families()[0], std::vector<MetricRow>{r});
    CHECK(one == "procedure\tD\tgap\np\t0.5\t0.20000000000000001\n");
  }

  TEST_CASE("smallest experiment and idempotent rerun") {
    const auto out = scratch("tiny");
    const auto cfg = parse_config(kTinyConfig);
    const auto result = run_experiment(cfg, out);
    CHECK(result.ok());
    CHECK(result.cells == 2);
    const auto rows = parse_metrics_csv(read_file(ExperimentLayout(out).metrics()));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].is_aggregate());
    CHECK(rows[1].model == "0_0");
    CHECK(rows[2].model == "0_1");
    CHECK(*rows[0].gap == *rows[0].test_loss - *rows[0].train_loss);
    CHECK(!rows[0].instability);  // K = 1
    CHECK(fs::exists(ExperimentLayout(out).predictions("only", "unlabeled")));
    CHECK(fs::exists(ExperimentLayout(out).manifest()));

    const auto metrics = read_file(ExperimentLayout(out).metrics());
    const auto ckpt = ExperimentLayout(out).checkpoints("only") / "0_1.ggap";
    const auto stamp = fs::last_write_time(ckpt);
    CHECK(run_experiment(cfg, out).ok());
    CHECK(fs::last_write_time(ckpt) == stamp);
    CHECK(read_file(ExperimentLayout(out).metrics()) == metrics);
    fs::remove_all(out);
  }

  TEST_CASE("deleting a checkpoint and resuming reproduces it") {
    const auto out = scratch("resume");
    const auto cfg = parse_config(kTinyConfig);
    run_experiment(cfg, out);
    const auto ckpt = ExperimentLayout(out).checkpoints("only") / "0_0.ggap";
    const auto before = read_file(ckpt);
    fs::remove(ckpt);
    CHECK(train_step(cfg, out).ok());
    CHECK(read_file(ckpt) == before);
    fs::remove_all(out);
  }

  TEST_CASE("changing a procedure discards its checkpoints") {
    const auto out = scratch("stale");
    auto cfg = parse_config(kTinyConfig);
    run_experiment(cfg, out);
    const auto ckpt = ExperimentLayout(out).checkpoints("only") / "0_0.ggap";
    const auto before = read_file(ckpt);
    cfg.procedures[0].spec.epochs = 3;
    CHECK(train_step(cfg, out).ok());
    CHECK(read_file(ckpt) != before);
    fs::remove_all(out);
  }

  TEST_CASE("eight-procedure sweep end to end") {
    const auto out = scratch("sweep");
    const auto cfg = parse_config(kSweepConfig);
    StepOptions opts;
    opts.jobs = 2;
    CHECK(run_experiment(cfg, out, opts).ok());
    const ExperimentLayout layout(out);
    const auto rows = parse_metrics_csv(read_file(layout.metrics()));
    CHECK(count_aggregates(rows) == 8);
    CHECK(rows.size() == 8 * 5);
    const auto scores = read_file(layout.scores());
    CHECK(scores.find("lr=") != std::string::npos);
    CHECK(scores.find("length=") != std::string::npos);
    CHECK(scores.find("ema=") != std::string::npos);
    for (const auto& f : plot_families()) {
      if (f.x == "one_sharpness") continue;  // not configured
      const auto tsv = read_file(layout.plots() / (f.file + ".tsv"));
      CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 9);
    }
    const auto again = scratch("sweep2");
    run_experiment(cfg, again);
    CHECK(read_file(ExperimentLayout(again).metrics()) == read_file(layout.metrics()));
    fs::remove_all(out);
    fs::remove_all(again);
  }

  TEST_CASE("distillation teachers resolve to procedures") {
    const auto out = scratch("distill");
    const auto cfg = parse_config(R"({
      "seed": 2,
      "dataset": {"generator": "two_moons", "train_size": 20, "K": 1, "unlabeled": 20, "test": 20},
      "J": 2,
      "procedure": {"epochs": 2, "batch_size": 10, "model": {"hidden": [{"width": 4}]}},
      "procedures": [
        {"name": "student", "objective": {"type": "distill", "teacher": "teacher", "beta_kl": 1}},
        {"name": "teacher"},
        {"name": "semi", "objective": {"type": "semi_consist", "threshold": 0.6}}
      ]
    })");
    const auto r = run_experiment(cfg, out);
    CHECK(r.ok());
    CHECK(r.cells == 5);
    fs::remove_all(out);
  }
}
