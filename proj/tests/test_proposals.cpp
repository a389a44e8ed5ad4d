#include <cmath>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "fishdet/proposals.hpp"
#include "fishdet/random.hpp"
#include "oracles.hpp"

using namespace fishdet;

TEST_CASE("generate_anchors: count and layout") {
  AnchorGridSpec spec;  // 3 scales x 3 ratios
  const auto anchors = generate_anchors(4, 4, spec);
  CHECK(anchors.size() == 144);

  AnchorGridSpec single;
  single.stride = 16;
  single.scales = {16.0};
  single.ratios = {1.0};
  const auto one = generate_anchors(1, 1, single);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == BoundingBox(0, 0, 16, 16));
  CHECK(one[0].center_x() == 8.0);
  CHECK(one[0].center_y() == 8.0);
}

TEST_CASE("generate_anchors: ratio shapes preserve area") {
  AnchorGridSpec spec;
  spec.scales = {32.0};
  spec.ratios = {2.0};
  const auto anchors = generate_anchors(1, 1, spec);
  REQUIRE(anchors.size() == 1);
  CHECK(anchors[0].width() == doctest::Approx(32.0 / std::sqrt(2.0)));
  CHECK(anchors[0].height() == doctest::Approx(32.0 * std::sqrt(2.0)));
  CHECK(area(anchors[0]) == doctest::Approx(32.0 * 32.0));
}

TEST_CASE("generate_anchors: closed forms over random specs") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    AnchorGridSpec spec;
    spec.stride = 1.0 + static_cast<double>(rng.below(31));
    spec.scales.clear();
    spec.ratios.clear();
    const std::size_t n_scales = 1 + rng.below(4);
    const std::size_t n_ratios = 1 + rng.below(4);
    for (std::size_t i = 0; i < n_scales; ++i) {
      spec.scales.push_back(rng.uniform(4.0, 128.0));
    }
    for (std::size_t i = 0; i < n_ratios; ++i) {
      spec.ratios.push_back(rng.uniform(0.2, 5.0));
    }
    const std::size_t w = 1 + rng.below(6);
    const std::size_t h = 1 + rng.below(6);
    const auto anchors = generate_anchors(w, h, spec);
    REQUIRE(anchors.size() == w * h * n_scales * n_ratios);
    std::size_t idx = 0;
    for (std::size_t j = 0; j < h; ++j) {
      for (std::size_t i = 0; i < w; ++i) {
        for (std::size_t s = 0; s < n_scales; ++s) {
          for (std::size_t r = 0; r < n_ratios; ++r, ++idx) {
            const BoundingBox& a = anchors[idx];
            CHECK(a.center_x() ==
                  doctest::Approx((static_cast<double>(i) + 0.5) * spec.stride));
            CHECK(a.center_y() ==
                  doctest::Approx((static_cast<double>(j) + 0.5) * spec.stride));
            CHECK(area(a) ==
                  doctest::Approx(spec.scales[s] * spec.scales[s]).epsilon(1e-9));
            CHECK(a.height() / a.width() ==
                  doctest::Approx(spec.ratios[r]).epsilon(1e-9));
          }
        }
      }
    }
  }
}

TEST_CASE("generate_anchors rejects bad specs") {
  AnchorGridSpec spec;
  CHECK_THROWS_AS(generate_anchors(0, 1, spec), std::invalid_argument);
  spec.scales = {};
  CHECK_THROWS_AS(generate_anchors(1, 1, spec), std::invalid_argument);
  spec = AnchorGridSpec{};
  spec.ratios = {0.0};
  CHECK_THROWS_AS(generate_anchors(1, 1, spec), std::invalid_argument);
}

TEST_CASE("label_anchors: thresholds and forced assignment") {
  const BoundingBox gt(10, 10, 30, 30);
  SUBCASE("identical anchor is positive") {
    const auto labels = label_anchors({gt}, {gt});
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].positive());
    CHECK(labels[0].matched_gt == 0);
  }
  SUBCASE("disjoint anchor is negative next to a matching one") {
    const auto labels = label_anchors({BoundingBox(60, 60, 80, 80), gt}, {gt});
    CHECK(labels[0].negative());
    CHECK(labels[1].positive());
  }
  SUBCASE("best anchor below pos_iou is still positive") {
    // IoU(anchor, gt) = 240/560 ~ 0.43 < 0.7, but it is the argmax anchor
    const BoundingBox anchor(8, 0, 28, 20);
    const BoundingBox far_anchor(60, 60, 80, 80);
    const auto labels = label_anchors({far_anchor, anchor}, {gt});
    // verify by exhaustive scan that index 1 really is the argmax
    CHECK(iou(anchor, gt) > iou(far_anchor, gt));
    CHECK(iou(anchor, gt) < 0.7);
    CHECK(labels[1].positive());
    CHECK(labels[1].matched_gt == 0);
  }
  SUBCASE("empty ground truth labels everything negative") {
    const auto labels = label_anchors({gt, BoundingBox(0, 0, 5, 5)}, {});
    for (const AnchorLabel& l : labels) CHECK(l.negative());
  }
  SUBCASE("between the thresholds is ignored") {
    // IoU = 0.5: half-overlap box against two anchors, second one disjoint
    const BoundingBox half(10, 10, 30, 50);  // taller, IoU(half,gt)=400/800=.5
    const BoundingBox best(10, 10, 30, 31);
    const auto labels = label_anchors({half, best}, {gt}, 0.7, 0.3);
    CHECK(iou(half, gt) == 0.5);
    CHECK(labels[0].assignment == AnchorAssignment::Ignore);
  }
}

TEST_CASE("label_anchors: every ground truth claims an anchor") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<BoundingBox> anchors;
    std::vector<BoundingBox> gts;
    const std::size_t n_anchor = 1 + rng.below(20);
    const std::size_t n_gt = 1 + rng.below(5);
    for (std::size_t i = 0; i < n_anchor; ++i) {
      const double x0 = rng.uniform(0, 80);
      const double y0 = rng.uniform(0, 80);
      anchors.emplace_back(x0, y0, x0 + rng.uniform(1, 20), y0 + rng.uniform(1, 20));
    }
    for (std::size_t i = 0; i < n_gt; ++i) {
      const double x0 = rng.uniform(0, 80);
      const double y0 = rng.uniform(0, 80);
      gts.emplace_back(x0, y0, x0 + rng.uniform(1, 20), y0 + rng.uniform(1, 20));
    }
    const auto labels = label_anchors(anchors, gts);
    std::size_t positives = 0;
    for (const AnchorLabel& l : labels) {
      if (l.positive()) {
        ++positives;
        CHECK(l.matched_gt >= 0);
        CHECK(l.matched_gt < static_cast<std::ptrdiff_t>(n_gt));
      } else {
        CHECK(l.matched_gt == -1);
      }
    }
    CHECK(positives >= 1);  // forced assignment guarantees at least one
  }
}

namespace {

std::vector<AnchorLabel> synthetic_labels(std::size_t n_pos, std::size_t n_neg) {
  std::vector<AnchorLabel> labels;
  for (std::size_t i = 0; i < n_pos; ++i) {
    labels.push_back({AnchorAssignment::Positive, 0});
  }
  for (std::size_t i = 0; i < n_neg; ++i) {
    labels.push_back({AnchorAssignment::Negative, -1});
  }
  return labels;
}

}  // namespace

TEST_CASE("sample_rpn_batch: fill rules") {
  SUBCASE("abundant positives take half the batch") {
    const auto labels = synthetic_labels(300, 1000);
    const auto picked = sample_rpn_batch(labels, 256, 0.5, 99);
    REQUIRE(picked.size() == 256);
    std::size_t pos = 0;
    for (std::size_t idx : picked) {
      if (labels[idx].positive()) ++pos;
    }
    CHECK(pos == 128);
  }
  SUBCASE("scarce positives are topped up with negatives") {
    const auto labels = synthetic_labels(10, 1000);
    const auto picked = sample_rpn_batch(labels, 256, 0.5, 99);
    REQUIRE(picked.size() == 256);
    std::size_t pos = 0;
    for (std::size_t idx : picked) {
      if (labels[idx].positive()) ++pos;
    }
    CHECK(pos == 10);
  }
  SUBCASE("scarce negatives are topped up with positives") {
    const auto labels = synthetic_labels(300, 0);
    const auto picked = sample_rpn_batch(labels, 256, 0.5, 99);
    CHECK(picked.size() == 256);
  }
  SUBCASE("fewer anchors than the batch returns them all") {
    const auto labels = synthetic_labels(3, 4);
    CHECK(sample_rpn_batch(labels, 256, 0.5, 1).size() == 7);
  }
  SUBCASE("deterministic under the seed") {
    const auto labels = synthetic_labels(40, 400);
    CHECK(sample_rpn_batch(labels, 64, 0.5, 7) ==
          sample_rpn_batch(labels, 64, 0.5, 7));
    CHECK(sample_rpn_batch(labels, 64, 0.5, 7) !=
          sample_rpn_batch(labels, 64, 0.5, 8));
  }
  SUBCASE("indices are unique") {
    const auto labels = synthetic_labels(40, 400);
    const auto picked = sample_rpn_batch(labels, 64, 0.5, 3);
    std::set<std::size_t> unique(picked.begin(), picked.end());
    CHECK(unique.size() == picked.size());
  }
  SUBCASE("no trainable anchors is an error") {
    std::vector<AnchorLabel> labels(5);  // all ignore
    CHECK_THROWS_WITH_AS(sample_rpn_batch(labels, 16, 0.5, 0),
                         "sample_rpn_batch: no trainable anchors",
                         std::runtime_error);
  }
}

TEST_CASE("nms: fixtures") {
  SUBCASE("single box is kept") {
    const std::vector<ScoredBox> boxes = {{BoundingBox(0, 0, 10, 10), 0.5}};
    CHECK(nms(boxes, 0.5) == std::vector<std::size_t>{0});
  }
  SUBCASE("overlapping pair keeps the stronger box") {
    const std::vector<ScoredBox> boxes = {{BoundingBox(0, 0, 10, 10), 0.9},
                                          {BoundingBox(1, 1, 11, 11), 0.8}};
    // IoU = 81/119 > 0.5
    CHECK(iou(boxes[0].box(), boxes[1].box()) ==
          doctest::Approx(81.0 / 119.0).epsilon(1e-12));
    CHECK(nms(boxes, 0.5) == std::vector<std::size_t>{0});
  }
  SUBCASE("disjoint boxes both survive, stronger first") {
    const std::vector<ScoredBox> boxes = {{BoundingBox(0, 0, 10, 10), 0.3},
                                          {BoundingBox(40, 40, 50, 50), 0.7}};
    CHECK(nms(boxes, 0.5) == std::vector<std::size_t>{1, 0});
  }
  SUBCASE("empty input gives empty output") {
    CHECK(nms({}, 0.5).empty());
  }
  SUBCASE("threshold domain") {
    CHECK_THROWS_AS(nms({}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(nms({}, 1.0), std::invalid_argument);
  }
}

namespace {

std::vector<ScoredBox> random_scored_boxes(Rng& rng, std::size_t max_n) {
  const std::size_t n = rng.below(max_n + 1);
  std::vector<ScoredBox> boxes;
  boxes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = rng.uniform(0, 40);
    const double y0 = rng.uniform(0, 40);
    // scores from a small grid so ties actually happen
    const double score = static_cast<double>(1 + rng.below(19)) / 20.0;
    boxes.emplace_back(BoundingBox(x0, y0, x0 + rng.uniform(2, 25),
                                   y0 + rng.uniform(2, 25)),
                       score);
  }
  return boxes;
}

}  // namespace

TEST_CASE("nms agrees with the brute-force oracle") {
  Rng rng(1234);
  for (int trial = 0; trial < 300; ++trial) {
    const auto boxes = random_scored_boxes(rng, 10);
    const double thresh = rng.uniform(0.1, 0.9);
    CHECK(nms(boxes, thresh) == oracles::nms_bruteforce(boxes, thresh));
  }
}

TEST_CASE("nms output properties") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto boxes = random_scored_boxes(rng, 16);
    const double thresh = rng.uniform(0.2, 0.8);
    const auto keep = nms(boxes, thresh);

    // descending score, pairwise IoU bounded
    for (std::size_t i = 1; i < keep.size(); ++i) {
      CHECK(boxes[keep[i - 1]].score() >= boxes[keep[i]].score());
    }
    for (std::size_t i = 0; i < keep.size(); ++i) {
      for (std::size_t j = i + 1; j < keep.size(); ++j) {
        CHECK(iou(boxes[keep[i]].box(), boxes[keep[j]].box()) <= thresh);
      }
    }

    // idempotence on the kept set
    std::vector<ScoredBox> kept_boxes;
    for (std::size_t k : keep) kept_boxes.push_back(boxes[k]);
    const auto again = nms(kept_boxes, thresh);
    REQUIRE(again.size() == keep.size());
    for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i] == i);
  }
}

TEST_CASE("propose: pipeline fixtures") {
  AnchorGridSpec grid;
  grid.stride = 16;
  grid.scales = {8.0};
  grid.ratios = {1.0};

  SUBCASE("zero deltas pass disjoint anchors through by score") {
    const auto anchors = generate_anchors(3, 1, grid);  // 8x8 boxes, disjoint
    const std::vector<double> scores = {0.9, 0.7, 0.8};
    const std::vector<BoxDelta> deltas(3, BoxDelta(0, 0, 0, 0));
    ProposalConfig config;
    config.min_size = 1.0;
    const auto proposals = propose(anchors, scores, deltas, 48, 16, config);
    REQUIRE(proposals.size() == 3);
    CHECK(proposals[0].box() == anchors[0]);
    CHECK(proposals[1].box() == anchors[2]);
    CHECK(proposals[2].box() == anchors[1]);
  }
  SUBCASE("boxes crossing the frame edge come back clipped") {
    const std::vector<BoundingBox> anchors = {BoundingBox(-6, -4, 10, 12)};
    const auto proposals = propose(anchors, {0.5}, {BoxDelta(0, 0, 0, 0)}, 8,
                                   8, ProposalConfig{});
    REQUIRE(proposals.size() == 1);
    CHECK(proposals[0].box() == BoundingBox(0, 0, 8, 8));
  }
  SUBCASE("coincident anchors collapse to the stronger one") {
    const BoundingBox box(4, 4, 20, 20);
    const std::vector<BoundingBox> anchors = {box, box};
    const std::vector<BoxDelta> deltas(2, BoxDelta(0, 0, 0, 0));
    const auto proposals =
        propose(anchors, {0.9, 0.8}, deltas, 32, 32, ProposalConfig{});
    REQUIRE(proposals.size() == 1);
    CHECK(proposals[0].score() == 0.9);
  }
  SUBCASE("length mismatch is an error") {
    const auto anchors = generate_anchors(2, 1, grid);
    CHECK_THROWS_AS(
        propose(anchors, {0.5}, {BoxDelta(0, 0, 0, 0)}, 32, 16, {}),
        std::invalid_argument);
  }
  SUBCASE("tiny boxes fall to the min_size rule") {
    const std::vector<BoundingBox> anchors = {BoundingBox(0, 0, 2, 2)};
    ProposalConfig config;
    config.min_size = 4.0;
    CHECK(propose(anchors, {0.5}, {BoxDelta(0, 0, 0, 0)}, 32, 32, config)
              .empty());
  }
}

TEST_CASE("propose: output bounded by post_nms_top_k and the frame") {
  Rng rng(5);
  AnchorGridSpec grid;
  grid.stride = 8;
  grid.scales = {6.0, 12.0};
  grid.ratios = {0.5, 1.0};
  const auto anchors = generate_anchors(6, 6, grid);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores;
    std::vector<BoxDelta> deltas;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      scores.push_back(rng.uniform());
      deltas.emplace_back(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                          rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
    }
    ProposalConfig config;
    config.post_nms_top_k = 10;
    config.min_size = 2.0;
    const auto proposals = propose(anchors, scores, deltas, 48, 48, config);
    CHECK(proposals.size() <= 10);
    for (const ScoredBox& p : proposals) {
      CHECK(p.box().xmin() >= 0.0);
      CHECK(p.box().ymin() >= 0.0);
      CHECK(p.box().xmax() <= 48.0);
      CHECK(p.box().ymax() <= 48.0);
    }
  }
}
