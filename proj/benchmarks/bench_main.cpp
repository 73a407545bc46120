#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "axcv/covar.hpp"
#include "axcv/nn/format.hpp"
#include "axcv/nn/inference.hpp"
#include "axcv/stats.hpp"
#include "axcv/systolic.hpp"

using namespace axcv;

namespace {

std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng());
  return v;
}

AxMultConfig kind_arg(const benchmark::State& state) {
  return AxMultConfig::make(static_cast<MultKind>(state.range(0)), static_cast<unsigned>(state.range(1)));
}

void BM_MultiplyApprox(benchmark::State& state) {
  const auto cfg = kind_arg(state);
  const auto w = random_bytes(4096, 1), a = random_bytes(4096, 2);
  for (auto _ : state) {
    std::uint64_t acc = 0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += multiply_approx(cfg, w[i], a[i]).value;
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.size()));
}
BENCHMARK(BM_MultiplyApprox)->Args({1, 2})->Args({2, 4})->Args({3, 6});

void BM_CorrectedDot(benchmark::State& state) {
  const auto cfg = AxMultConfig::make(MultKind::Truncated, 5);
  const auto k = static_cast<std::size_t>(state.range(0));
  const Filter f{random_bytes(k, 3), 100};
  const auto consts = derive_constants(cfg, f);
  const auto a = random_bytes(k, 4);
  for (auto _ : state) benchmark::DoNotOptimize(corrected_dot(consts, f, a));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CorrectedDot)->Arg(9)->Arg(64)->Arg(576);

void BM_DeriveConstants(benchmark::State& state) {
  const auto cfg = kind_arg(state);
  const Filter f{random_bytes(576, 5), 0};
  for (auto _ : state) benchmark::DoNotOptimize(derive_constants(cfg, f));
}
BENCHMARK(BM_DeriveConstants)->Args({1, 2})->Args({2, 4})->Args({3, 6});

void BM_MultErrorStats(benchmark::State& state) {
  const auto cfg = AxMultConfig::make(MultKind::Perforated, 2);
  const auto u = OperandDistribution::uniform();
  for (auto _ : state) benchmark::DoNotOptimize(mult_error_stats(cfg, u, u, 100'000, 7));
  state.SetItemsProcessed(state.iterations() * 100'000);
}
BENCHMARK(BM_MultErrorStats)->Unit(benchmark::kMillisecond);

void BM_ConvErrorStudy(benchmark::State& state) {
  const auto cfg = AxMultConfig::make(MultKind::Recursive, 4);
  const Filter f{random_bytes(static_cast<std::size_t>(state.range(0)), 6), 0};
  for (auto _ : state)
    benchmark::DoNotOptimize(conv_error_study(cfg, f, OperandDistribution::uniform(), 10'000, 9));
  state.SetItemsProcessed(state.iterations() * 10'000 * state.range(0));
}
BENCHMARK(BM_ConvErrorStudy)->Arg(64)->Arg(576)->Unit(benchmark::kMillisecond);

void BM_SystolicTile(benchmark::State& state) {
  const auto n = static_cast<unsigned>(state.range(0));
  const auto mult = AxMultConfig::make(MultKind::Perforated, 2);
  TileInput tile;
  tile.rows = tile.cols = n;
  tile.weights = random_bytes(n * n, 10);
  for (unsigned r = 0; r < n; ++r) {
    Filter f{std::vector<std::uint8_t>(tile.weights.begin() + r * n, tile.weights.begin() + (r + 1) * n), 1000};
    tile.biases.push_back(f.bias);
    tile.constants.push_back(derive_constants(mult, f));
  }
  for (int v = 0; v < 8; ++v) tile.activations.push_back(random_bytes(n, 11 + v));
  SystolicArray array(MacArrayConfig::make(n, mult));
  for (auto _ : state) benchmark::DoNotOptimize(array.run_tile(tile));
  state.SetItemsProcessed(state.iterations() * 8 * n * n);
}
BENCHMARK(BM_SystolicTile)->Arg(16)->Arg(64);

void BM_FixtureForward(benchmark::State& state) {
  const std::filesystem::path dir = AXCV_FIXTURE_DIR;
  const auto model = nn::load_model(dir / "digits_cnn.axm");
  const auto data = nn::load_dataset(dir / "digits_test.img", dir / "digits_test.lbl");
  const nn::InferenceEngine engine(model, {AxMultConfig::make(MultKind::Truncated, 5), state.range(0) != 0});
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine.forward(data.image(i)));
    i = (i + 1) % data.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FixtureForward)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
