#include "fishdet/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fishdet/random.hpp"

namespace fishdet {

ScoredBox::ScoredBox(BoundingBox box, double score)
    : box_(box), score_(score) {
  if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
    throw std::invalid_argument("ScoredBox: score must be finite in [0, 1]");
  }
}

std::vector<BoundingBox> generate_anchors(std::size_t feat_w,
                                          std::size_t feat_h,
                                          const AnchorGridSpec& spec) {
  if (feat_w < 1 || feat_h < 1) {
    throw std::invalid_argument("generate_anchors: grid must be at least 1x1");
  }
  if (spec.stride < 1.0) {
    throw std::invalid_argument("generate_anchors: stride must be >= 1");
  }
  if (spec.scales.empty() || spec.ratios.empty()) {
    throw std::invalid_argument(
        "generate_anchors: scales and ratios must be nonempty");
  }
  for (double s : spec.scales) {
    if (!(s > 0.0)) {
      throw std::invalid_argument("generate_anchors: scales must be positive");
    }
  }
  for (double r : spec.ratios) {
    if (!(r > 0.0)) {
      throw std::invalid_argument("generate_anchors: ratios must be positive");
    }
  }

  std::vector<BoundingBox> anchors;
  anchors.reserve(feat_w * feat_h * spec.anchors_per_cell());
  for (std::size_t j = 0; j < feat_h; ++j) {
    for (std::size_t i = 0; i < feat_w; ++i) {
      const double cx = (static_cast<double>(i) + 0.5) * spec.stride;
      const double cy = (static_cast<double>(j) + 0.5) * spec.stride;
      for (double s : spec.scales) {
        for (double r : spec.ratios) {
          // w*h = s^2 with h/w = r
          const double w = s / std::sqrt(r);
          const double h = s * std::sqrt(r);
          anchors.emplace_back(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w,
                               cy + 0.5 * h);
        }
      }
    }
  }
  return anchors;
}

std::vector<AnchorLabel> label_anchors(
    const std::vector<BoundingBox>& anchors,
    const std::vector<BoundingBox>& ground_truths, double pos_iou,
    double neg_iou) {
  if (!(0.0 <= neg_iou && neg_iou <= pos_iou && pos_iou <= 1.0)) {
    throw std::invalid_argument(
        "label_anchors: requires 0 <= neg_iou <= pos_iou <= 1");
  }

  std::vector<AnchorLabel> labels(anchors.size());
  if (ground_truths.empty()) {
    // Background frame: everything trains as negative.
    for (auto& label : labels) label.assignment = AnchorAssignment::Negative;
    return labels;
  }

  std::vector<double> best_iou(anchors.size(), -1.0);
  std::vector<std::ptrdiff_t> best_gt(anchors.size(), -1);
  std::vector<double> gt_best_iou(ground_truths.size(), -1.0);
  std::vector<std::size_t> gt_best_anchor(ground_truths.size(), 0);

  for (std::size_t a = 0; a < anchors.size(); ++a) {
    for (std::size_t g = 0; g < ground_truths.size(); ++g) {
      const double v = iou(anchors[a], ground_truths[g]);
      if (v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = static_cast<std::ptrdiff_t>(g);
      }
      if (v > gt_best_iou[g]) {
        gt_best_iou[g] = v;
        gt_best_anchor[g] = a;
      }
    }
  }

  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (best_iou[a] >= pos_iou) {
      labels[a] = {AnchorAssignment::Positive, best_gt[a]};
    } else if (best_iou[a] < neg_iou) {
      labels[a] = {AnchorAssignment::Negative, -1};
    } else {
      labels[a] = {AnchorAssignment::Ignore, -1};
    }
  }

  // Forced assignment: the best anchor of each ground truth is positive
  // regardless of threshold, so no ground truth goes unclaimed.
  if (!anchors.empty()) {
    for (std::size_t g = 0; g < ground_truths.size(); ++g) {
      const std::size_t a = gt_best_anchor[g];
      labels[a] = {AnchorAssignment::Positive, best_gt[a]};
    }
  }
  return labels;
}

std::vector<std::size_t> sample_rpn_batch(
    const std::vector<AnchorLabel>& labels, std::size_t batch_size,
    double pos_fraction, std::uint64_t seed) {
  if (batch_size < 1) {
    throw std::invalid_argument("sample_rpn_batch: batch_size must be >= 1");
  }
  if (!(pos_fraction > 0.0 && pos_fraction < 1.0)) {
    throw std::invalid_argument(
        "sample_rpn_batch: pos_fraction must lie in (0, 1)");
  }

  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].positive()) positives.push_back(i);
    if (labels[i].negative()) negatives.push_back(i);
  }
  if (positives.empty() && negatives.empty()) {
    throw std::runtime_error("sample_rpn_batch: no trainable anchors");
  }

  const std::size_t want =
      std::min(batch_size, positives.size() + negatives.size());
  std::size_t n_pos =
      std::min(positives.size(),
               static_cast<std::size_t>(std::floor(pos_fraction *
                                                   static_cast<double>(batch_size))));
  std::size_t n_neg = std::min(negatives.size(), batch_size - n_pos);
  if (n_pos + n_neg < want) {
    n_pos = std::min(positives.size(), want - n_neg);
  }

  Rng rng(seed);
  std::vector<std::size_t> picked = sample_without_replacement(positives, n_pos, rng);
  const std::vector<std::size_t> negs =
      sample_without_replacement(negatives, n_neg, rng);
  picked.insert(picked.end(), negs.begin(), negs.end());
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<std::size_t> nms(const std::vector<ScoredBox>& boxes,
                             double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) {
    throw std::invalid_argument("nms: iou_thresh must lie in (0, 1)");
  }

  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (boxes[a].score() != boxes[b].score())
      return boxes[a].score() > boxes[b].score();
    return a < b;
  });

  std::vector<char> suppressed(boxes.size(), 0);
  std::vector<std::size_t> keep;
  for (std::size_t p = 0; p < order.size(); ++p) {
    const std::size_t i = order[p];
    if (suppressed[i]) continue;
    keep.push_back(i);
    for (std::size_t q = p + 1; q < order.size(); ++q) {
      const std::size_t j = order[q];
      if (suppressed[j]) continue;
      if (iou(boxes[i].box(), boxes[j].box()) > iou_thresh) suppressed[j] = 1;
    }
  }
  return keep;
}

std::vector<ScoredBox> propose(const std::vector<BoundingBox>& anchors,
                               const std::vector<double>& objectness,
                               const std::vector<BoxDelta>& deltas,
                               double image_w, double image_h,
                               const ProposalConfig& config) {
  if (anchors.size() != objectness.size() || anchors.size() != deltas.size()) {
    throw std::invalid_argument(
        "propose: anchors, objectness and deltas must have equal length");
  }
  if (!(image_w > 0.0) || !(image_h > 0.0)) {
    throw std::invalid_argument("propose: image dimensions must be positive");
  }

  struct Candidate {
    BoundingBox box;
    double score;
    std::size_t index;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const BoundingBox decoded = decode(anchors[i], deltas[i]);
    const std::optional<BoundingBox> clipped = clip(decoded, image_w, image_h);
    if (!clipped) continue;
    if (clipped->width() < config.min_size ||
        clipped->height() < config.min_size) {
      continue;
    }
    candidates.push_back({*clipped, objectness[i], i});
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.index < b.index;
            });
  if (candidates.size() > config.pre_nms_top_k) {
    candidates.erase(candidates.begin() +
                         static_cast<std::ptrdiff_t>(config.pre_nms_top_k),
                     candidates.end());
  }

  std::vector<ScoredBox> scored;
  scored.reserve(candidates.size());
  for (const Candidate& c : candidates) scored.emplace_back(c.box, c.score);

  std::vector<std::size_t> keep = nms(scored, config.nms_thresh);
  if (keep.size() > config.post_nms_top_k) keep.resize(config.post_nms_top_k);

  std::vector<ScoredBox> out;
  out.reserve(keep.size());
  for (std::size_t k : keep) out.push_back(scored[k]);
  return out;
}

}  // namespace fishdet
