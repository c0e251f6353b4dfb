#include <benchmark/benchmark.h>

#include "gengap/autodiff.hpp"
#include "gengap/dataset.hpp"
#include "gengap/metrics.hpp"
#include "gengap/model.hpp"
#include "gengap/training.hpp"

namespace {

using namespace gengap;

ModelSpec mlp(std::size_t width) {
  return ModelSpec{2, {{width, Activation::kRelu}}, 3};
}

DatasetBundle toy_data(std::size_t train, std::size_t K) {
  DatasetSpec spec;
  spec.train_size = train;
  spec.K = K;
  spec.unlabeled = 500;
  spec.test = 100;
  spec.seed = 1;
  return generate_dataset(spec);
}

void BM_Gradient(benchmark::State& state) {
  const auto spec = mlp(static_cast<std::size_t>(state.range(0)));
  const auto data = toy_data(128, 1).train(0);
  const auto theta = init_params(spec, 3);
  const auto loss = mean_cross_entropy_loss(spec, data);
  for (auto _ : state) benchmark::DoNotOptimize(gradient(loss, theta));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Gradient)->Arg(16)->Arg(64);

void BM_Hvp(benchmark::State& state) {
  const auto spec = mlp(32);
  const auto data = toy_data(128, 1).train(0);
  const auto theta = init_params(spec, 3);
  const auto loss = mean_cross_entropy_loss(spec, data);
  const auto v = init_params(spec, 4);
  for (auto _ : state) benchmark::DoNotOptimize(hvp(loss, theta, v));
}
BENCHMARK(BM_Hvp);

void BM_TrainStandard(benchmark::State& state) {
  const auto data = toy_data(256, 1).train(0);
  ProcedureSpec proc;
  proc.name = "bench";
  proc.model = mlp(32);
  proc.epochs = 1;
  proc.batch_size = 32;
  for (auto _ : state) benchmark::DoNotOptimize(train_standard(proc, data, 5));
}
BENCHMARK(BM_TrainStandard);

void BM_Inconsistency(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  const std::size_t J = 4;
  const auto data = toy_data(64, K);
  std::vector<Model> models;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < J; ++j) {
      Model m{mlp(16), init_params(mlp(16), 100 + k * J + j),
              Lineage{"bench", static_cast<std::uint32_t>(k),
                      static_cast<std::uint32_t>(j), k * J + j}};
      models.push_back(std::move(m));
    }
  }
  const auto preds = predict_matrix(models, data.unlabeled(), "unlabeled");
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_inconsistency(preds));
    benchmark::DoNotOptimize(estimate_instability(preds));
  }
}
BENCHMARK(BM_Inconsistency)->Arg(2)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
