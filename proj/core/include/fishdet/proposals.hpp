#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fishdet/geometry.hpp"

namespace fishdet {

/// Dense anchor layout: one anchor per (cell, scale, ratio) combination on a
/// regular grid. Scales are anchor side lengths in pixels (anchor area is
/// scale squared); ratios are height/width.
struct AnchorGridSpec {
  double stride = 16.0;
  std::vector<double> scales = {64.0, 128.0, 256.0};
  std::vector<double> ratios = {0.5, 1.0, 2.0};

  std::size_t anchors_per_cell() const { return scales.size() * ratios.size(); }
};

/// A box with an attached confidence in [0, 1].
class ScoredBox {
 public:
  ScoredBox(BoundingBox box, double score);

  const BoundingBox& box() const { return box_; }
  double score() const { return score_; }

 private:
  BoundingBox box_;
  double score_;
};

enum class AnchorAssignment : std::uint8_t { Positive, Negative, Ignore };

struct AnchorLabel {
  AnchorAssignment assignment = AnchorAssignment::Ignore;
  /// Index of the matched ground truth; >= 0 exactly when positive.
  std::ptrdiff_t matched_gt = -1;

  bool positive() const { return assignment == AnchorAssignment::Positive; }
  bool negative() const { return assignment == AnchorAssignment::Negative; }
};

/// All anchors for a feat_w x feat_h grid, ordered row-major over cells,
/// then scales, then ratios. Anchor (i, j, s, r) is centered at
/// ((i+0.5)*stride, (j+0.5)*stride) with area s^2 and height/width ratio r.
std::vector<BoundingBox> generate_anchors(std::size_t feat_w,
                                          std::size_t feat_h,
                                          const AnchorGridSpec& spec);

/// IoU-based anchor assignment. An anchor is positive when its best IoU
/// reaches pos_iou or when it is the best anchor of some ground truth (so
/// every ground truth owns at least one positive); negative when its best
/// IoU is below neg_iou; ignored otherwise. Positives carry the anchor's
/// own argmax ground-truth index, ties to the lowest index.
std::vector<AnchorLabel> label_anchors(
    const std::vector<BoundingBox>& anchors,
    const std::vector<BoundingBox>& ground_truths, double pos_iou = 0.7,
    double neg_iou = 0.3);

/// Seeded minibatch selection: up to pos_fraction*batch_size positives, the
/// rest negatives; whichever side runs short is topped up from the other.
/// Returned indices are sorted ascending. Throws when no anchor is labeled
/// positive or negative.
std::vector<std::size_t> sample_rpn_batch(
    const std::vector<AnchorLabel>& labels, std::size_t batch_size,
    double pos_fraction, std::uint64_t seed);

/// Greedy non-maximum suppression. Returns kept indices in descending score
/// order; score ties break toward the earlier input index. A remaining box
/// is discarded when its IoU with a kept box exceeds iou_thresh.
std::vector<std::size_t> nms(const std::vector<ScoredBox>& boxes,
                             double iou_thresh);

struct ProposalConfig {
  std::size_t pre_nms_top_k = 2000;
  std::size_t post_nms_top_k = 300;
  double nms_thresh = 0.7;
  double min_size = 4.0;
};

/// Full proposal generation: decode every anchor with its delta, clip to the
/// image, drop boxes thinner than min_size, keep the pre-NMS top-k by score,
/// suppress, keep the post-NMS top-k.
std::vector<ScoredBox> propose(const std::vector<BoundingBox>& anchors,
                               const std::vector<double>& objectness,
                               const std::vector<BoxDelta>& deltas,
                               double image_w, double image_h,
                               const ProposalConfig& config = {});

}  // namespace fishdet
