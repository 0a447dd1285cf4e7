#include <benchmark/benchmark.h>

#include <random>

#include "ircr/data.hpp"
#include "ircr/matching.hpp"
#include "ircr/model.hpp"
#include "ircr/priors.hpp"
#include "ircr/wbis.hpp"

using namespace ircr;

namespace {

const data::Scene& scene() {
  static const data::Scene s = data::generate_scene({});
  return s;
}

void BM_Forward(benchmark::State& state) {
  const auto params = model::ModelParams::he_normal({}, 1);
  const Tensor& img = scene().image;
  for (auto _ : state) benchmark::DoNotOptimize(model::forward(params, img, false));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto params = model::ModelParams::he_normal({}, 1);
  const Tensor& img = scene().image;
  const Tensor gn = Tensor::stack(2, 64, 64, 1e-3);
  const Tensor gh = Tensor::stack(2, 64, 64, 1e-3);
  for (auto _ : state) benchmark::DoNotOptimize(model::backward(params, model::forward(params, img), gn, gh));
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_Munkres(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 64.0);
  matching::DistanceMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(matching::munkres(m));
}
BENCHMARK(BM_Munkres)->Arg(8)->Arg(32)->Arg(128);

void BM_Wbis(benchmark::State& state) {
  const data::Scene& s = scene();
  Tensor prob = Tensor::plane(64, 64);
  for (std::size_t i = 0; i < prob.size(); ++i) prob[i] = s.gt_labels[i] > 0 ? 1.0 : 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(wbis::segment_instances(prob, s.gt_hv));
}
BENCHMARK(BM_Wbis);

void BM_ScoreInstances(benchmark::State& state) {
  std::vector<priors::FeatureVector> z;
  for (const auto& s : data::generate_dataset({}, 64, 3)) {
    const auto f = priors::extract_all_features(s.gt_labels, s.image.channel(0));
    z.insert(z.end(), f.begin(), f.end());
  }
  const auto bank = priors::fit_kde(z);
  const auto feats = priors::extract_all_features(scene().gt_labels, scene().image.channel(0));
  for (auto _ : state)
    for (const auto& f : feats) benchmark::DoNotOptimize(priors::score_instance(bank, f));
  state.counters["bank_size"] = static_cast<double>(z.size());
}
BENCHMARK(BM_ScoreInstances);

}  // namespace

BENCHMARK_MAIN();
