#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "modpipe/desk.hpp"
#include "modpipe/evalx.hpp"
#include "modpipe/select.hpp"

using namespace modpipe;

namespace {

Dataset corpus(std::size_t n) {
  desk::Language lang(1);
  desk::CorpusSpec c;
  c.size = n;
  c.event_rates = desk::uniform_rates(0.04);
  c.seed = 2;
  return desk::generate(lang, c);
}

}  // namespace

static void BM_Featurize(benchmark::State& state) {
  const auto d = corpus(256);
  const auto cfg = desk::model_spec().featurizer;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(featurize(d[i++ % d.size()].text, cfg));
  }
}
BENCHMARK(BM_Featurize);

static void BM_ForwardBackward(benchmark::State& state) {
  const auto d = corpus(static_cast<std::size_t>(state.range(0)));
  const Model model(desk::model_spec());
  std::vector<SparseVector> xs;
  std::vector<LabelVector> ys;
  for (const auto& s : d) {
    xs.push_back(model.features(s.text));
    ys.push_back(*s.consolidated);
  }
  std::vector<const SparseVector*> batch;
  for (const auto& x : xs) batch.push_back(&x);
  const auto& net = model.network();
  for (auto _ : state) {
    const auto trace = net.forward(batch, {});
    benchmark::DoNotOptimize(net.classifier_gradient(trace, ys, nullptr, 0.0));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(256);

static void BM_AveragePrecision(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<bool> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    labels[i] = i == 0 || u(rng) < 0.05;
  }
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(scores, labels));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AveragePrecision)->Arg(1000)->Arg(100000);

static void BM_SelectUncertainty(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::string> ids;
  std::vector<CategoryScores> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("id" + std::to_string(i));
    for (auto& v : scores[i]) v = u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(select_uncertainty(ids, scores, n / 10));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SelectUncertainty)->Arg(20000);
BENCHMARK_MAIN();
