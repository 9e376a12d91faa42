#include <benchmark/benchmark.h>

#include <vector>

#include "metagnn/dataset.hpp"
#include "metagnn/gnn.hpp"
#include "metagnn/graph.hpp"
#include "metagnn/meta.hpp"
#include "metagnn/montage.hpp"
#include "metagnn/random.hpp"
#include "metagnn/signal.hpp"

namespace {

using namespace metagnn;

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor({r, c}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(19)->Arg(64)->Arg(256);

void BM_FftFeatures(benchmark::State& state) {
  std::vector<std::vector<double>> signals(19, std::vector<double>(1280));
  Rng rng(3);
  for (auto& ch : signals) {
    for (auto& x : ch) x = rng.normal();
  }
  for (auto _ : state) benchmark::DoNotOptimize(fft_features(signals, 128.0));
}
BENCHMARK(BM_FftFeatures);

std::vector<Tensor> random_clips(std::size_t n) {
  std::vector<Tensor> clips;
  for (std::size_t i = 0; i < n; ++i) clips.push_back(random_matrix(kNumChannels, 400, 10 + i));
  return clips;
}

void BM_Classify(benchmark::State& state) {
  ArchConfig arch;
  arch.arch = state.range(0) == 0 ? Arch::kGCN : Arch::kGAT;
  arch.hidden = {32, 32};
  const auto model = ModelParams::init(arch, 1);
  const auto graph = build_distance_graph(Montage::standard_1020(), {});
  const auto clips = random_clips(static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(classify_batch(clips, graph, model.arch, model.values));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_Classify)->ArgNames({"gat", "batch"})->Args({0, 1})->Args({0, 24})->Args({1, 1})->Args({1, 24});

void BM_MetaStep(benchmark::State& state) {
  ArchConfig arch;
  arch.arch = state.range(0) == 0 ? Arch::kGCN : Arch::kGAT;
  arch.hidden = {32, 32};
  const auto graph = build_distance_graph(Montage::standard_1020(), {});
  std::vector<ClipTask> tasks;
  for (std::size_t t = 0; t < 8; ++t) {
    PatientTask task;
    task.patient_id = "p" + std::to_string(t);
    for (std::size_t i = 0; i < 24; ++i) {
      LabeledClip c;
      c.features = random_matrix(kNumChannels, 400, 100 * t + i);
      c.label = static_cast<int>(i % 2);
      c.kind = static_cast<ClipKind>(c.label);
      c.t0 = 10.0 * static_cast<double>(i);
      (i < 12 ? task.support : task.query).push_back(c);
    }
    tasks.emplace_back(std::move(task), graph, arch);
  }
  std::vector<const MetaTask*> views;
  for (const auto& t : tasks) views.push_back(&t);
  MetaConfig cfg;
  cfg.order = state.range(1) == 0 ? MetaOrder::kSecondOrder : MetaOrder::kFirstOrder;
  auto theta = ModelParams::init(arch, 2).values;
  for (auto _ : state) benchmark::DoNotOptimize(meta_step(theta, views, cfg));
}
BENCHMARK(BM_MetaStep)->ArgNames({"gat", "first_order"})->Args({0, 0})->Args({0, 1})->Args({1, 0})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
