// Forward-pass latency of the classic layer and the expected-activation layer
// on the same geometry: 32 filters of 5x5, stride 2, padding 2.
// Args: input side, batch, factor count l (misconv only).
#include <vector>

#include <benchmark/benchmark.h>

#include "misconv/bench.hpp"
#include "misconv/conv.hpp"
#include "misconv/layer.hpp"
#include "misconv/random.hpp"

namespace {

using namespace misconv;

KernelStack bench_kernels(Index channels) { return KernelStack::random(32, channels, 5, 5, {2, 2}, {2, 2}, 1); }

Matrix random_images(Index n, Index batch, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Matrix m(n, batch);
  for (Index j = 0; j < batch; ++j)
    for (Index i = 0; i < n; ++i) m(i, j) = standard_normal(rng);
  return m;
}

std::vector<MFAModel> random_models(Index n, Index l, Index batch, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<MFAModel> out;
  for (Index b = 0; b < batch; ++b) {
    Vector mu(n), d(n);
    Matrix a(n, l);
    for (Index i = 0; i < n; ++i) {
      mu(i) = standard_normal(rng);
      d(i) = 0.1 + 0.01 * std::abs(standard_normal(rng));
      for (Index j = 0; j < l; ++j) a(i, j) = 0.3 * standard_normal(rng);
    }
    out.push_back(MFAModel({FactorAnalyzer(mu, a, d)}, Vector::Ones(1)));
  }
  return out;
}

void BM_ClassicForward(benchmark::State& state) {
  const Index size = state.range(0);
  const Index batch = state.range(1);
  const ImageShape shape{bench_channels(size), size, size};
  const KernelStack kernels = bench_kernels(shape.channels);
  const Matrix imgs = random_images(shape.size(), batch, 2);
  for (auto _ : state) benchmark::DoNotOptimize(classic_forward_batch(imgs, shape, kernels, Activation::kRelu));
  state.SetItemsProcessed(state.iterations() * batch);
}

void BM_MisconvForward(benchmark::State& state) {
  const Index size = state.range(0);
  const Index batch = state.range(1);
  const ImageShape shape{bench_channels(size), size, size};
  const KernelStack kernels = bench_kernels(shape.channels);
  const std::vector<MFAModel> models = random_models(shape.size(), state.range(2), batch, 3);
  for (auto _ : state) benchmark::DoNotOptimize(misconv_forward_batch(models, shape, kernels, Activation::kRelu));
  state.SetItemsProcessed(state.iterations() * batch);
}

void classic_args(benchmark::internal::Benchmark* b) {
  for (int size : {28, 32, 64})
    for (int batch : {16, 32, 64}) b->Args({size, batch});
}

void misconv_args(benchmark::internal::Benchmark* b) {
  for (int size : {28, 32, 64})
    for (int batch : {16, 32, 64})
      for (int l : {0, 4}) b->Args({size, batch, l});
}

}  // namespace

BENCHMARK(BM_ClassicForward)->Apply(classic_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MisconvForward)->Apply(misconv_args)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
