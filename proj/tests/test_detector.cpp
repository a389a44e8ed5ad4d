#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "fishdet/detector.hpp"
#include "fishdet/random.hpp"
#include "oracles.hpp"

using namespace fishdet;

namespace {

DetectorConfig tiny_config() {
  DetectorConfig config;
  config.arch = Arch::Zf;
  config.width_scale = 0.05;
  config.class_names = {"roundfin", "stripetail"};
  config.anchor_scales = {10.0, 20.0};
  config.anchor_ratios = {1.0};
  config.rpn_channels = 8;
  config.roi_pool = 4;
  config.head_hidden = 16;
  return config;
}

Tensor random_image(Rng& rng, std::size_t h, std::size_t w) {
  Tensor t({3, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.5, 0.5);
  return t;
}

}  // namespace

TEST_CASE("roi_max_pool: gradient routing matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(808, seed));
    Tensor feat({3, 6, 6});
    {
      // distinct values so argmaxes are stable under perturbation
      std::vector<std::size_t> order(feat.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      shuffle(order, rng);
      for (std::size_t i = 0; i < feat.size(); ++i) {
        feat[order[i]] = static_cast<double>(i) * 0.05;
      }
    }
    const double x0 = rng.uniform(0, 20);
    const double y0 = rng.uniform(0, 20);
    const BoundingBox roi(x0, y0, x0 + rng.uniform(8, 22),
                          y0 + rng.uniform(8, 22));
    const double stride = 8.0;
    const std::size_t pool = 2;

    Tensor probe({3, pool, pool});
    for (std::size_t i = 0; i < probe.size(); ++i) {
      probe[i] = rng.uniform(0.2, 1.0) * (rng.below(2) == 0 ? 1.0 : -1.0);
    }
    const auto loss = [&]() {
      const RoiPooled pooled = roi_max_pool(feat, roi, stride, pool);
      double acc = 0.0;
      for (std::size_t i = 0; i < probe.size(); ++i) {
        acc += pooled.out[i] * probe[i];
      }
      return acc;
    };

    const RoiPooled pooled = roi_max_pool(feat, roi, stride, pool);
    Tensor analytic(feat.shape());
    for (std::size_t i = 0; i < probe.size(); ++i) {
      analytic[pooled.argmax[i]] += probe[i];
    }
    for (std::size_t i = 0; i < feat.size(); ++i) {
      CHECK(oracles::gradients_match(
          analytic[i], oracles::central_difference(loss, feat[i])));
    }
  }
}

TEST_CASE("roi_max_pool: every bin covers at least one cell") {
  Tensor feat({1, 4, 4});
  for (std::size_t i = 0; i < feat.size(); ++i) {
    feat[i] = static_cast<double>(i);
  }
  // degenerate-thin roi still pools
  const RoiPooled pooled = roi_max_pool(feat, BoundingBox(0, 0, 1, 1), 8.0, 3);
  CHECK(pooled.out.size() == 9);
  for (std::size_t i = 0; i < pooled.out.size(); ++i) {
    CHECK(pooled.out[i] == feat[pooled.argmax[i]]);
  }
}

TEST_CASE("detector: detections stay inside the frame with known labels") {
  Detector det(tiny_config(), {3, 48, 48}, 5);
  Rng rng(17);
  const Tensor image = random_image(rng, 48, 48);
  const auto detections = det.detect(image);
  for (const Detection& d : detections) {
    CHECK((d.label == "roundfin" || d.label == "stripetail"));
    CHECK(d.score >= det.config().score_thresh);
    CHECK(d.score <= 1.0);
    CHECK(d.box.xmin() >= 0.0);
    CHECK(d.box.ymin() >= 0.0);
    CHECK(d.box.xmax() <= 48.0);
    CHECK(d.box.ymax() <= 48.0);
  }
}

TEST_CASE("detector: training steps are finite and all-negative frames skip "
          "regression") {
  Detector det(tiny_config(), {3, 48, 48}, 6);
  Rng rng(18);
  const Tensor image = random_image(rng, 48, 48);

  TrainConfig train;
  train.rpn_batch_size = 32;
  train.batch_size = 16;

  SUBCASE("with ground truth") {
    const std::vector<AnnotatedObject> truths = {
        {"roundfin", BoundingBox(10, 10, 26, 26)},
        {"stripetail", BoundingBox(30, 28, 44, 40)}};
    const auto stats = det.train_step(image, truths, train, 99);
    CHECK(std::isfinite(stats.total));
    CHECK(stats.rpn_cls > 0.0);
    CHECK(stats.rpn_positives >= 2);  // forced assignment per ground truth
    CHECK(stats.roi_positives >= 2);  // seeded ground-truth rois
  }
  SUBCASE("background frame contributes no regression loss") {
    const auto stats = det.train_step(image, {}, train, 99);
    CHECK(stats.rpn_reg == 0.0);
    CHECK(stats.head_reg == 0.0);
    CHECK(stats.rpn_positives == 0);
    CHECK(stats.roi_positives == 0);
    CHECK(stats.rpn_cls > 0.0);
  }
  SUBCASE("unknown labels are rejected") {
    const std::vector<AnnotatedObject> truths = {
        {"kraken", BoundingBox(10, 10, 26, 26)}};
    CHECK_THROWS_AS(det.train_step(image, truths, train, 99),
                    std::invalid_argument);
  }
}

TEST_CASE("detector: deterministic under seeds") {
  Rng rng(19);
  const Tensor image = random_image(rng, 48, 48);
  const std::vector<AnnotatedObject> truths = {
      {"roundfin", BoundingBox(12, 12, 30, 30)}};
  TrainConfig train;
  train.rpn_batch_size = 32;
  train.batch_size = 16;

  Detector a(tiny_config(), {3, 48, 48}, 7);
  Detector b(tiny_config(), {3, 48, 48}, 7);
  for (std::uint64_t iter = 0; iter < 3; ++iter) {
    a.train_step(image, truths, train, mix_seed(1, iter));
    b.train_step(image, truths, train, mix_seed(1, iter));
  }
  const auto da = a.detect(image);
  const auto db = b.detect(image);
  REQUIRE(da.size() == db.size());
  for (std::size_t i = 0; i < da.size(); ++i) {
    CHECK(da[i].label == db[i].label);
    CHECK(da[i].score == db[i].score);
    CHECK(da[i].box == db[i].box);
  }
}

TEST_CASE("detector: checkpoint round trip preserves behavior bitwise") {
  Rng rng(20);
  const Tensor image = random_image(rng, 48, 48);
  Detector det(tiny_config(), {3, 48, 48}, 8);
  TrainConfig train;
  train.rpn_batch_size = 32;
  train.batch_size = 16;
  det.train_step(image, {{"roundfin", BoundingBox(8, 8, 28, 28)}}, train, 1);

  const auto path =
      std::filesystem::temp_directory_path() / "fishdet_detector_test.ckpt";
  save_checkpoint(path, det.to_checkpoint(42));
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.iteration == 42);
  Detector restored = Detector::from_checkpoint(loaded);

  const auto da = det.detect(image);
  const auto db = restored.detect(image);
  REQUIRE(da.size() == db.size());
  for (std::size_t i = 0; i < da.size(); ++i) {
    CHECK(da[i].label == db[i].label);
    CHECK(da[i].score == db[i].score);
    CHECK(da[i].box == db[i].box);
  }
  std::filesystem::remove(path);

  Checkpoint not_detector;
  not_detector.meta = "{}";
  CHECK_THROWS_AS(Detector::from_checkpoint(not_detector), std::runtime_error);
}
