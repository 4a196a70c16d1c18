#include <benchmark/benchmark.h>

#include <random>

#include "quicksilver/optimizer.hpp"
#include "quicksilver/predict.hpp"
#include "quicksilver/synthetic.hpp"

using namespace quicksilver;

namespace {

VectorField noise(const GridGeometry& g, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  VectorField f(g);
  for (double& v : f.values()) v = n(rng);
  return f;
}

GridGeometry grid_arg(const benchmark::State& state) {
  return GridGeometry::cube(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
}

const SynthPair& pair64() {
  static const SynthPair p = [] {
    SynthConfig cfg;
    return generate_pairs(cfg, 0, 1)[0];
  }();
  return p;
}

void BM_ApplyK(benchmark::State& state) {
  const auto g = grid_arg(state);
  const FluidKernel k(g, {});
  const auto m = noise(g, 1, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(k.apply_K(m));
  state.SetItemsProcessed(state.iterations() * g.voxel_count());
}
BENCHMARK(BM_ApplyK)->Args({2, 64})->Args({2, 128})->Args({3, 32})->Unit(benchmark::kMicrosecond);

void BM_Shoot(benchmark::State& state) {
  const auto g = grid_arg(state);
  const FluidKernel k(g, {});
  const auto& p = pair64();
  const auto m = g.voxel_count() == p.momentum.geometry().voxel_count() ? p.momentum : noise(g, 2, 1e-4);
  for (auto _ : state) benchmark::DoNotOptimize(shoot(m, k, {10, Integrator::Rk4}));
}
BENCHMARK(BM_Shoot)->Args({2, 64})->Args({2, 128})->Args({3, 32})->Unit(benchmark::kMillisecond);

void BM_EnergyGradient(benchmark::State& state) {
  const auto& p = pair64();
  const GridGeometry& g = p.moving.geometry();
  const RegistrationProblem prob{p.moving, p.target, FluidKernel(g, {}), 0.2, {10, Integrator::Rk4}};
  VectorField grad(g);
  const VectorField m0(g);
  for (auto _ : state) benchmark::DoNotOptimize(energy_and_gradient(m0, prob, grad));
}
BENCHMARK(BM_EnergyGradient)->Unit(benchmark::kMillisecond);

void BM_NetForward(benchmark::State& state) {
  const int features = static_cast<int>(state.range(0)), batch = 16;
  const auto net = nn::Network<float>::initialized({2, features}, 1);
  nn::Tensor<float> mv({batch, 1, 15, 15}, 0.5f), tg({batch, 1, 15, 15}, 0.25f);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(mv, tg));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_NetForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  const auto& p = pair64();
  const auto data = build_training_dataset({{p.moving, p.target, p.momentum}}, PatchSpec{});
  nn::TrainConfig tc;
  tc.epochs = 1;
  for (auto _ : state) {
    auto net = nn::Network<float>::initialized({2, static_cast<int>(state.range(0))}, 1);
    benchmark::DoNotOptimize(nn::train(net, data.data, tc));
  }
  state.SetItemsProcessed(state.iterations() * data.size());
}
BENCHMARK(BM_TrainEpoch)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_PredictFull(benchmark::State& state) {
  const auto& p = pair64();
  const auto net = nn::Network<float>::initialized({2, static_cast<int>(state.range(0))}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(predict_full(net, p.moving, p.target, PredictOptions{}));
}
BENCHMARK(BM_PredictFull)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

// the packaged benchmark_main archive is built with a different LTO version
BENCHMARK_MAIN();
