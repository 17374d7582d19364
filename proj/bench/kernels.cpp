// Serial reference kernels against their OpenMP versions.
// Thread count follows SBNN_THREADS / OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "sbnn/bitcore.hpp"
#include "sbnn/encoder.hpp"
#include "sbnn/model.hpp"
#include "sbnn/parallel.hpp"

using namespace sbnn;

namespace {

BitMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  BitMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m.set(r, c, gen() & 1);
  }
  return m;
}

BitVector random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  BitVector v(n);
  for (std::size_t i = 0; i < n; ++i) v.set(i, gen() & 1);
  return v;
}

BnnModel random_model(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const std::size_t sizes[] = {784, 1024, 1024, 10};
  std::vector<BnnModel::Layer> layers;
  for (std::size_t k = 0; k + 1 < std::size(sizes); ++k) {
    BnnModel::Layer l;
    l.weights = random_matrix(sizes[k + 1], sizes[k], gen());
    l.mu.assign(sizes[k + 1], 0.0);
    l.scale.assign(sizes[k + 1], 30.0);
    layers.push_back(std::move(l));
  }
  return BnnModel(std::move(layers));
}

Dataset random_images(std::size_t n) {
  std::mt19937_64 gen(9);
  Dataset d;
  d.rows = d.cols = 28;
  for (std::size_t i = 0; i < n * 784; ++i) d.pixels.push_back(static_cast<double>(gen() % 256) / 255.0);
  d.labels.assign(n, 0);
  return d;
}

void BM_GemvSerial(benchmark::State& s) {
  const auto w = random_matrix(1024, 1024, 1);
  const auto a = random_vector(1024, 2);
  for (auto _ : s) benchmark::DoNotOptimize(serial::binary_gemv(w, a));
}

void BM_GemvParallel(benchmark::State& s) {
  const auto w = random_matrix(1024, 1024, 1);
  const auto a = random_vector(1024, 2);
  for (auto _ : s) benchmark::DoNotOptimize(binary_gemv(w, a));
}

void BM_SampleSerial(benchmark::State& s) {
  const auto x = random_images(1).pixels;
  const PixelSampler rng(RngKind::Lfsr8, 3);
  for (auto _ : s) benchmark::DoNotOptimize(serial::sample_presentations(x, 100, rng));
}

void BM_SampleParallel(benchmark::State& s) {
  const auto x = random_images(1).pixels;
  const PixelSampler rng(RngKind::Lfsr8, 3);
  for (auto _ : s) benchmark::DoNotOptimize(sample_presentations(x, 100, rng));
}

void BM_PredictSerial(benchmark::State& s) {
  const auto model = random_model(4);
  const auto data = random_images(200);
  StochasticConfig cfg;
  cfg.presentations = 8;
  for (auto _ : s) benchmark::DoNotOptimize(serial::predict_stochastic(model, data, cfg));
}

void BM_PredictParallel(benchmark::State& s) {
  const auto model = random_model(4);
  const auto data = random_images(200);
  StochasticConfig cfg;
  cfg.presentations = 8;
  for (auto _ : s) benchmark::DoNotOptimize(predict_stochastic(model, data, cfg));
}

}  // namespace

BENCHMARK(BM_GemvSerial);
BENCHMARK(BM_GemvParallel);
BENCHMARK(BM_SampleSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SampleParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_PredictSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictParallel)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
