#include <benchmark/benchmark.h>

#include <random>

#include "cpn/pipeline.hpp"
#include "cpn/synth.hpp"

using namespace cpn;

namespace {

const SampledScene& scene() {
  static const SampledScene s = sample_scene(SynthConfig{}, 7);
  return s;
}

void BM_DecodeCorners(benchmark::State& state) {
  const auto& hm = scene().bundle.heatmaps;
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(decode_corners(hm, CornerKind::kTopLeft, k));
}
BENCHMARK(BM_DecodeCorners)->Arg(10)->Arg(70)->Arg(200);

void BM_RoiAlign(benchmark::State& state) {
  const Tensor& f = scene().bundle.features.cat_feat;
  const BBox box{40, 60, 300, 220};
  for (auto _ : state) benchmark::DoNotOptimize(roi_align(f, box));
}
BENCHMARK(BM_RoiAlign);

void BM_SoftNms(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<Detection> d(static_cast<std::size_t>(state.range(0)));
  for (auto& x : d) {
    const float x1 = u(rng) * 400, y1 = u(rng) * 400;
    x = {{x1, y1, x1 + 10 + u(rng) * 100, y1 + 10 + u(rng) * 100}, int(rng() % 4), u(rng),
         LabelSource::kCornerClass};
  }
  for (auto _ : state) benchmark::DoNotOptimize(soft_nms(d));
}
BENCHMARK(BM_SoftNms)->Arg(100)->Arg(1000);

void BM_Detect(benchmark::State& state) {
  const auto& s = scene();
  const PipelineConfig cfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        detect(s.bundle.heatmaps, s.bundle.features, s.bundle.planted_head_weights, cfg));
}
BENCHMARK(BM_Detect)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
