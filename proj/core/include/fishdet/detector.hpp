#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fishdet/checkpoint.hpp"
#include "fishdet/dataset.hpp"
#include "fishdet/network.hpp"
#include "fishdet/optim.hpp"
#include "fishdet/proposals.hpp"

namespace fishdet {

/// Two-stage detector assembly: a shared convolutional backbone, a dense
/// region-proposal head (objectness + box deltas over an anchor grid) and a
/// region classifier head (RoI max-pooled features -> species scores + a
/// class-agnostic box refinement).
struct DetectorConfig {
  Arch arch = Arch::Zf;
  double width_scale = 0.25;
  std::vector<std::string> class_names;  // species; background is implicit

  std::vector<double> anchor_scales = {12.0, 24.0, 48.0};
  std::vector<double> anchor_ratios = {0.5, 1.0, 2.0};

  std::size_t rpn_channels = 64;
  std::size_t roi_pool = 6;
  std::size_t head_hidden = 64;

  double rpn_pos_iou = 0.7;
  double rpn_neg_iou = 0.3;
  double rpn_pos_fraction = 0.5;
  double roi_pos_iou = 0.5;
  double head_pos_fraction = 0.25;
  double loss_lambda = 1.0;

  ProposalConfig train_proposals{2000, 300, 0.7, 4.0};
  ProposalConfig infer_proposals{1000, 100, 0.7, 4.0};

  double score_thresh = 0.05;
  double detection_nms = 0.3;
  std::size_t max_detections = 50;
};

struct Detection {
  std::string label;
  double score;
  BoundingBox box;
};

struct RoiPooled {
  Tensor out;                       // [C,pool,pool]
  std::vector<std::size_t> argmax;  // flat index into the feature map
};

/// Max-pools the feature-map window under an image-space box (divided by
/// stride) to a fixed pool x pool grid; every bin covers at least one cell.
/// The argmax bookkeeping is what routes gradients back during training.
RoiPooled roi_max_pool(const Tensor& feat, const BoundingBox& box,
                       double stride, std::size_t pool);

class Detector {
 public:
  /// Builds the backbone and both heads for a fixed input size, seeded.
  Detector(DetectorConfig config, std::vector<std::size_t> input_shape,
           std::uint64_t seed);

  const DetectorConfig& config() const { return config_; }
  const NetworkSpec& backbone() const { return backbone_; }
  const std::vector<std::size_t>& input_shape() const {
    return backbone_.input_shape;
  }
  std::size_t stride() const { return stride_; }
  std::size_t n_classes() const { return config_.class_names.size(); }

  std::vector<Detection> detect(const Tensor& image) const;

  struct StepStats {
    double rpn_cls = 0.0;
    double rpn_reg = 0.0;
    double head_cls = 0.0;
    double head_reg = 0.0;
    double total = 0.0;
    std::size_t rpn_positives = 0;
    std::size_t roi_positives = 0;
  };

  /// One SGD step of joint training on a single annotated image; gradients
  /// from both heads flow into the shared backbone. Proposal coordinates
  /// are treated as constants.
  StepStats train_step(const Tensor& image,
                       const std::vector<AnnotatedObject>& truths,
                       const TrainConfig& train, std::uint64_t step_seed);

  Checkpoint to_checkpoint(std::uint64_t iteration) const;
  static Detector from_checkpoint(const Checkpoint& ckpt);

 private:
  Detector() = default;
  void finish_setup();

  DetectorConfig config_;
  NetworkSpec backbone_;
  ParamMap head_params_;  // rpn.* and head.*
  ParamMap backbone_velocity_;
  ParamMap head_velocity_;

  std::size_t stride_ = 1;
  std::size_t feat_channels_ = 0;
  std::size_t feat_h_ = 0;
  std::size_t feat_w_ = 0;
  AnchorGridSpec anchor_spec_;
  std::vector<BoundingBox> anchors_;
  std::map<std::string, std::size_t> class_index_;
};

}  // namespace fishdet
