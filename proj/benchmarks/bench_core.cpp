#include <benchmark/benchmark.h>

#include "fishdet/geometry.hpp"
#include "fishdet/layers.hpp"
#include "fishdet/network.hpp"
#include "fishdet/proposals.hpp"
#include "fishdet/random.hpp"

namespace {

using namespace fishdet;

std::vector<ScoredBox> make_boxes(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ScoredBox> boxes;
  boxes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = rng.uniform(0, 900);
    const double y0 = rng.uniform(0, 900);
    boxes.emplace_back(BoundingBox(x0, y0, x0 + rng.uniform(8, 120),
                                   y0 + rng.uniform(8, 120)),
                       rng.uniform());
  }
  return boxes;
}

void BM_Iou(benchmark::State& state) {
  const auto boxes = make_boxes(64, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    const double v = iou(boxes[i % 64].box(), boxes[(i * 7 + 3) % 64].box());
    benchmark::DoNotOptimize(v);
    ++i;
  }
}
BENCHMARK(BM_Iou);

void BM_Nms(benchmark::State& state) {
  const auto boxes = make_boxes(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) {
    auto keep = nms(boxes, 0.7);
    benchmark::DoNotOptimize(keep);
  }
}
BENCHMARK(BM_Nms)->Arg(100)->Arg(1000);

void BM_GenerateAnchors(benchmark::State& state) {
  AnchorGridSpec spec;
  for (auto _ : state) {
    auto anchors = generate_anchors(60, 40, spec);
    benchmark::DoNotOptimize(anchors);
  }
}
BENCHMARK(BM_GenerateAnchors);

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(3);
  Tensor input({24, 24, 24});
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.uniform(-1, 1);
  Tensor kernels({64, 24, 3, 3});
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    kernels[i] = rng.gaussian(0, 0.05);
  }
  Tensor bias({64});
  for (auto _ : state) {
    auto out = conv2d_forward(input, kernels, bias, 1, 1);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_Conv2dForward);

void BM_BackboneForward(benchmark::State& state) {
  const NetworkSpec spec = build_backbone(Arch::Zf, 0.25, {3, 96, 96}, 4);
  Rng rng(5);
  Tensor image({3, 96, 96});
  for (std::size_t i = 0; i < image.size(); ++i) {
    image[i] = rng.uniform(-0.5, 0.5);
  }
  for (auto _ : state) {
    auto acts = forward(spec, image);
    benchmark::DoNotOptimize(acts);
  }
}
BENCHMARK(BM_BackboneForward);

}  // namespace

BENCHMARK_MAIN();
