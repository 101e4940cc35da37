#include <benchmark/benchmark.h>

#include <random>

#include "stamping/baseline.hpp"
#include "stamping/dsp.hpp"
#include "stamping/pipeline.hpp"
#include "stamping/segmentation.hpp"

using namespace stamping;

namespace {

const signals::StrokeSignal& stroke() {
  static const auto s = signals::synthesize_stroke(signals::GeneratorParams{}, signals::Label::Normal, 1);
  return s;
}

linalg::Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  linalg::Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = g(rng);
  return m;
}

}  // namespace

static void BM_FilterDesign(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(dsp::design_butterworth_lowpass({1800.0, static_cast<int>(state.range(0)), 100000.0}));
}
BENCHMARK(BM_FilterDesign)->Arg(3)->Arg(8);

static void BM_FilterStroke(benchmark::State& state) {
  const auto c = dsp::design_butterworth_lowpass({1800.0, 3, 100000.0});
  const auto mode = state.range(0) ? dsp::FilterMode::ZeroPhase : dsp::FilterMode::Causal;
  for (auto _ : state) benchmark::DoNotOptimize(dsp::filter_samples(c, stroke().samples, mode));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(stroke().samples.size()));
}
BENCHMARK(BM_FilterStroke)->Arg(0)->Arg(1);

static void BM_PowerSpectrum(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(dsp::power_spectrum(stroke(), dsp::Window::Hann));
}
BENCHMARK(BM_PowerSpectrum);

static void BM_Segment(benchmark::State& state) {
  const auto f = dsp::apply_filter(dsp::design_butterworth_lowpass({1800.0, 3, 100000.0}), stroke(),
                                   dsp::FilterMode::Causal);
  for (auto _ : state) benchmark::DoNotOptimize(segmentation::segment_stroke(f, {}));
}
BENCHMARK(BM_Segment);

static void BM_ExtractFeatures(benchmark::State& state) {
  const pipeline::Preprocessing prep;
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::extract_stroke_features(stroke(), prep));
}
BENCHMARK(BM_ExtractFeatures);

static void BM_TrainOneClass(benchmark::State& state) {
  const auto x = gaussian(static_cast<std::size_t>(state.range(0)), 8, 3);
  for (auto _ : state) benchmark::DoNotOptimize(baseline::train_one_class(x, 0.02, {baseline::KernelKind::Rbf, 0.1}));
}
BENCHMARK(BM_TrainOneClass)->Arg(200)->Arg(820)->Unit(benchmark::kMillisecond);

static void BM_DecisionDistance(benchmark::State& state) {
  const auto m = baseline::train_one_class(gaussian(820, 8, 4), 0.02, {baseline::KernelKind::Rbf, 0.1});
  const auto probe = gaussian(1, 8, 5);
  for (auto _ : state) benchmark::DoNotOptimize(baseline::decision_distance(m, probe.row(0)));
}
BENCHMARK(BM_DecisionDistance);
BENCHMARK_MAIN();
