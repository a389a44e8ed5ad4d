#include "fishdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fishdet/layers.hpp"
#include "fishdet/random.hpp"

namespace fishdet {
namespace {

// Largest |dw|/|dh| accepted from a head at inference; wilder values come
// only from an untrained or diverged net and would blow up decode.
constexpr double kDeltaClamp = 4.0;

double clamp_delta(double v) {
  return std::clamp(v, -kDeltaClamp, kDeltaClamp);
}

}  // namespace

RoiPooled roi_max_pool(const Tensor& feat, const BoundingBox& box,
                       double stride, std::size_t pool) {
  const std::size_t channels = feat.dim(0);
  const std::size_t fh = feat.dim(1);
  const std::size_t fw = feat.dim(2);

  const double x0 = std::clamp(box.xmin() / stride, 0.0, static_cast<double>(fw));
  const double x1 = std::clamp(box.xmax() / stride, 0.0, static_cast<double>(fw));
  const double y0 = std::clamp(box.ymin() / stride, 0.0, static_cast<double>(fh));
  const double y1 = std::clamp(box.ymax() / stride, 0.0, static_cast<double>(fh));

  RoiPooled result;
  result.out = Tensor({channels, pool, pool});
  result.argmax.assign(channels * pool * pool, 0);

  for (std::size_t py = 0; py < pool; ++py) {
    const double fy0 = y0 + (y1 - y0) * static_cast<double>(py) /
                                static_cast<double>(pool);
    const double fy1 = y0 + (y1 - y0) * static_cast<double>(py + 1) /
                                static_cast<double>(pool);
    std::size_t cy0 = static_cast<std::size_t>(
        std::clamp(std::floor(fy0), 0.0, static_cast<double>(fh - 1)));
    std::size_t cy1 = static_cast<std::size_t>(
        std::clamp(std::ceil(fy1), 1.0, static_cast<double>(fh)));
    if (cy1 <= cy0) cy1 = cy0 + 1;
    for (std::size_t px = 0; px < pool; ++px) {
      const double fx0 = x0 + (x1 - x0) * static_cast<double>(px) /
                                  static_cast<double>(pool);
      const double fx1 = x0 + (x1 - x0) * static_cast<double>(px + 1) /
                                  static_cast<double>(pool);
      std::size_t cx0 = static_cast<std::size_t>(
          std::clamp(std::floor(fx0), 0.0, static_cast<double>(fw - 1)));
      std::size_t cx1 = static_cast<std::size_t>(
          std::clamp(std::ceil(fx1), 1.0, static_cast<double>(fw)));
      if (cx1 <= cx0) cx1 = cx0 + 1;

      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t best_idx = (c * fh + cy0) * fw + cx0;
        double best = feat[best_idx];
        for (std::size_t y = cy0; y < cy1; ++y) {
          for (std::size_t x = cx0; x < cx1; ++x) {
            const std::size_t idx = (c * fh + y) * fw + x;
            if (feat[idx] > best) {
              best = feat[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t out_idx = (c * pool + py) * pool + px;
        result.out[out_idx] = best;
        result.argmax[out_idx] = best_idx;
      }
    }
  }
  return result;
}

namespace {

void accumulate(Tensor& into, const Tensor& grad) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += grad[i];
}

void add_grad(ParamMap& grads, const std::string& name, Tensor grad) {
  const auto it = grads.find(name);
  if (it == grads.end()) {
    grads[name] = std::move(grad);
  } else {
    accumulate(it->second, grad);
  }
}

nlohmann::json proposal_config_to_json(const ProposalConfig& p) {
  return {{"pre_nms_top_k", p.pre_nms_top_k},
          {"post_nms_top_k", p.post_nms_top_k},
          {"nms_thresh", p.nms_thresh},
          {"min_size", p.min_size}};
}

ProposalConfig proposal_config_from_json(const nlohmann::json& j) {
  ProposalConfig p;
  p.pre_nms_top_k = j.at("pre_nms_top_k").get<std::size_t>();
  p.post_nms_top_k = j.at("post_nms_top_k").get<std::size_t>();
  p.nms_thresh = j.at("nms_thresh").get<double>();
  p.min_size = j.at("min_size").get<double>();
  return p;
}

}  // namespace

Detector::Detector(DetectorConfig config, std::vector<std::size_t> input_shape,
                   std::uint64_t seed)
    : config_(std::move(config)) {
  if (config_.class_names.empty()) {
    throw std::invalid_argument("Detector: class_names must be nonempty");
  }
  backbone_ = build_backbone(config_.arch, config_.width_scale,
                             std::move(input_shape), mix_seed(seed, 1));

  Rng rng(mix_seed(seed, 2));
  const auto shapes = infer_shapes(backbone_);
  const std::size_t feat_c = shapes.back()[0];
  const std::size_t rpn_c = config_.rpn_channels;
  const std::size_t per_cell =
      config_.anchor_scales.size() * config_.anchor_ratios.size();
  const std::size_t k_cls = config_.class_names.size() + 1;

  const auto he = [&](const std::vector<std::size_t>& shape,
                      std::size_t fan_in) {
    return gaussian_tensor(shape, std::sqrt(2.0 / static_cast<double>(fan_in)),
                           rng);
  };
  head_params_["rpn.conv.weight"] = he({rpn_c, feat_c, 3, 3}, feat_c * 9);
  head_params_["rpn.conv.bias"] = Tensor({rpn_c});
  head_params_["rpn.cls.weight"] =
      gaussian_tensor({2 * per_cell, rpn_c, 1, 1}, 0.01, rng);
  head_params_["rpn.cls.bias"] = Tensor({2 * per_cell});
  head_params_["rpn.reg.weight"] =
      gaussian_tensor({4 * per_cell, rpn_c, 1, 1}, 0.01, rng);
  head_params_["rpn.reg.bias"] = Tensor({4 * per_cell});

  const std::size_t pooled = feat_c * config_.roi_pool * config_.roi_pool;
  head_params_["head.fc1.weight"] = he({config_.head_hidden, pooled}, pooled);
  head_params_["head.fc1.bias"] = Tensor({config_.head_hidden});
  head_params_["head.cls.weight"] =
      gaussian_tensor({k_cls, config_.head_hidden}, 0.01, rng);
  head_params_["head.cls.bias"] = Tensor({k_cls});
  head_params_["head.reg.weight"] =
      gaussian_tensor({4, config_.head_hidden}, 0.01, rng);
  head_params_["head.reg.bias"] = Tensor({4});

  finish_setup();
}

void Detector::finish_setup() {
  const auto shapes = infer_shapes(backbone_);
  feat_channels_ = shapes.back()[0];
  feat_h_ = shapes.back()[1];
  feat_w_ = shapes.back()[2];
  stride_ = feature_stride(backbone_);

  anchor_spec_.stride = static_cast<double>(stride_);
  anchor_spec_.scales = config_.anchor_scales;
  anchor_spec_.ratios = config_.anchor_ratios;
  anchors_ = generate_anchors(feat_w_, feat_h_, anchor_spec_);

  class_index_.clear();
  for (std::size_t i = 0; i < config_.class_names.size(); ++i) {
    class_index_[config_.class_names[i]] = i;
  }
}

std::vector<Detection> Detector::detect(const Tensor& image) const {
  const std::vector<Tensor> acts = forward(backbone_, image);
  const Tensor& feat = acts.back();

  const Tensor trunk_pre =
      conv2d_forward(feat, head_params_.at("rpn.conv.weight"),
                     head_params_.at("rpn.conv.bias"), 1, 1);
  const Tensor trunk = relu_forward(trunk_pre);
  const Tensor cls_map =
      conv2d_forward(trunk, head_params_.at("rpn.cls.weight"),
                     head_params_.at("rpn.cls.bias"), 1, 0);
  const Tensor reg_map =
      conv2d_forward(trunk, head_params_.at("rpn.reg.weight"),
                     head_params_.at("rpn.reg.bias"), 1, 0);

  const std::size_t cells = feat_h_ * feat_w_;
  const std::size_t per_cell = anchor_spec_.anchors_per_cell();
  std::vector<double> objectness(anchors_.size());
  std::vector<BoxDelta> deltas;
  deltas.reserve(anchors_.size());
  for (std::size_t y = 0; y < feat_h_; ++y) {
    for (std::size_t x = 0; x < feat_w_; ++x) {
      const std::size_t cell = y * feat_w_ + x;
      for (std::size_t a = 0; a < per_cell; ++a) {
        const double bg = cls_map[(2 * a) * cells + cell];
        const double fg = cls_map[(2 * a + 1) * cells + cell];
        // two-way softmax
        const double m = std::max(bg, fg);
        const double eb = std::exp(bg - m);
        const double ef = std::exp(fg - m);
        objectness[cell * per_cell + a] = ef / (eb + ef);
        deltas.emplace_back(reg_map[(4 * a) * cells + cell],
                            reg_map[(4 * a + 1) * cells + cell],
                            clamp_delta(reg_map[(4 * a + 2) * cells + cell]),
                            clamp_delta(reg_map[(4 * a + 3) * cells + cell]));
      }
    }
  }

  const double image_w = static_cast<double>(backbone_.input_shape[2]);
  const double image_h = static_cast<double>(backbone_.input_shape[1]);
  const std::vector<ScoredBox> proposals =
      propose(anchors_, objectness, deltas, image_w, image_h,
              config_.infer_proposals);

  const std::size_t k_cls = config_.class_names.size() + 1;
  std::vector<std::vector<ScoredBox>> per_class(config_.class_names.size());
  for (const ScoredBox& proposal : proposals) {
    const RoiPooled pooled =
        roi_max_pool(feat, proposal.box(), static_cast<double>(stride_),
                     config_.roi_pool);
    const Tensor flat = pooled.out.flattened();
    const Tensor hidden = relu_forward(fully_connected_forward(
        flat, head_params_.at("head.fc1.weight"),
        head_params_.at("head.fc1.bias")));
    const Tensor logits =
        fully_connected_forward(hidden, head_params_.at("head.cls.weight"),
                                head_params_.at("head.cls.bias"));
    const Tensor probs = softmax(logits);
    const Tensor reg =
        fully_connected_forward(hidden, head_params_.at("head.reg.weight"),
                                head_params_.at("head.reg.bias"));
    const BoxDelta refine(reg[0], reg[1], clamp_delta(reg[2]),
                          clamp_delta(reg[3]));
    const auto refined = clip(decode(proposal.box(), refine), image_w, image_h);
    if (!refined) continue;
    for (std::size_t c = 1; c < k_cls; ++c) {
      if (probs[c] >= config_.score_thresh) {
        per_class[c - 1].emplace_back(*refined, probs[c]);
      }
    }
  }

  std::vector<Detection> detections;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const std::vector<std::size_t> keep =
        nms(per_class[c], config_.detection_nms);
    for (std::size_t k : keep) {
      detections.push_back({config_.class_names[c], per_class[c][k].score(),
                            per_class[c][k].box()});
    }
  }
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  if (detections.size() > config_.max_detections) {
    detections.erase(detections.begin() +
                         static_cast<std::ptrdiff_t>(config_.max_detections),
                     detections.end());
  }
  return detections;
}

Detector::StepStats Detector::train_step(
    const Tensor& image, const std::vector<AnnotatedObject>& truths,
    const TrainConfig& train, std::uint64_t step_seed) {
  validate(train);
  StepStats stats;

  std::vector<BoundingBox> gt_boxes;
  std::vector<std::size_t> gt_classes;
  gt_boxes.reserve(truths.size());
  for (const AnnotatedObject& truth : truths) {
    const auto it = class_index_.find(truth.label);
    if (it == class_index_.end()) {
      throw std::invalid_argument("train_step: label not in class_names: " +
                                  truth.label);
    }
    gt_boxes.push_back(truth.box);
    gt_classes.push_back(it->second);
  }

  const std::vector<Tensor> acts = forward(backbone_, image);
  const Tensor& feat = acts.back();

  const Tensor trunk_pre =
      conv2d_forward(feat, head_params_.at("rpn.conv.weight"),
                     head_params_.at("rpn.conv.bias"), 1, 1);
  const Tensor trunk = relu_forward(trunk_pre);
  const Tensor cls_map =
      conv2d_forward(trunk, head_params_.at("rpn.cls.weight"),
                     head_params_.at("rpn.cls.bias"), 1, 0);
  const Tensor reg_map =
      conv2d_forward(trunk, head_params_.at("rpn.reg.weight"),
                     head_params_.at("rpn.reg.bias"), 1, 0);

  const std::size_t cells = feat_h_ * feat_w_;
  const std::size_t per_cell = anchor_spec_.anchors_per_cell();

  // ---- region-proposal losses over a sampled anchor minibatch ----
  const std::vector<AnchorLabel> labels =
      label_anchors(anchors_, gt_boxes, config_.rpn_pos_iou,
                    config_.rpn_neg_iou);
  const std::vector<std::size_t> sampled =
      sample_rpn_batch(labels, train.rpn_batch_size, config_.rpn_pos_fraction,
                       mix_seed(step_seed, 1));

  std::size_t sampled_pos = 0;
  for (std::size_t idx : sampled) {
    if (labels[idx].positive()) ++sampled_pos;
  }
  stats.rpn_positives = sampled_pos;

  Tensor d_cls_map(cls_map.shape());
  Tensor d_reg_map(reg_map.shape());
  const double cls_norm = static_cast<double>(sampled.size());
  const double reg_norm = static_cast<double>(std::max<std::size_t>(1, sampled_pos));

  for (std::size_t idx : sampled) {
    const std::size_t cell = idx / per_cell;
    const std::size_t a = idx % per_cell;
    const Tensor logits({2}, {cls_map[(2 * a) * cells + cell],
                              cls_map[(2 * a + 1) * cells + cell]});
    const std::size_t target = labels[idx].positive() ? 1 : 0;
    const SoftmaxCrossEntropyResult sce = softmax_cross_entropy(logits, target);
    stats.rpn_cls += sce.loss / cls_norm;
    d_cls_map[(2 * a) * cells + cell] += sce.grad_logits[0] / cls_norm;
    d_cls_map[(2 * a + 1) * cells + cell] += sce.grad_logits[1] / cls_norm;

    if (labels[idx].positive()) {
      const BoundingBox& gt =
          gt_boxes[static_cast<std::size_t>(labels[idx].matched_gt)];
      const BoxDelta target_delta = encode(anchors_[idx], gt);
      const Tensor pred({4}, {reg_map[(4 * a) * cells + cell],
                              reg_map[(4 * a + 1) * cells + cell],
                              reg_map[(4 * a + 2) * cells + cell],
                              reg_map[(4 * a + 3) * cells + cell]});
      const Tensor target_t({4}, {target_delta.dx, target_delta.dy,
                                  target_delta.dw, target_delta.dh});
      const SmoothL1Result sl1 = smooth_l1(pred, target_t);
      stats.rpn_reg += sl1.loss / reg_norm;
      for (std::size_t c = 0; c < 4; ++c) {
        d_reg_map[(4 * a + c) * cells + cell] +=
            config_.loss_lambda * sl1.grad_pred[c] / reg_norm;
      }
    }
  }

  // ---- proposals for the classifier head (coordinates detached) ----
  std::vector<double> objectness(anchors_.size());
  std::vector<BoxDelta> deltas;
  deltas.reserve(anchors_.size());
  for (std::size_t y = 0; y < feat_h_; ++y) {
    for (std::size_t x = 0; x < feat_w_; ++x) {
      const std::size_t cell = y * feat_w_ + x;
      for (std::size_t a = 0; a < per_cell; ++a) {
        const double bg = cls_map[(2 * a) * cells + cell];
        const double fg = cls_map[(2 * a + 1) * cells + cell];
        const double m = std::max(bg, fg);
        const double eb = std::exp(bg - m);
        const double ef = std::exp(fg - m);
        objectness[cell * per_cell + a] = ef / (eb + ef);
        deltas.emplace_back(reg_map[(4 * a) * cells + cell],
                            reg_map[(4 * a + 1) * cells + cell],
                            clamp_delta(reg_map[(4 * a + 2) * cells + cell]),
                            clamp_delta(reg_map[(4 * a + 3) * cells + cell]));
      }
    }
  }
  const double image_w = static_cast<double>(backbone_.input_shape[2]);
  const double image_h = static_cast<double>(backbone_.input_shape[1]);
  const std::vector<ScoredBox> proposals =
      propose(anchors_, objectness, deltas, image_w, image_h,
              config_.train_proposals);

  std::vector<BoundingBox> candidates;
  candidates.reserve(proposals.size() + 3 * gt_boxes.size());
  for (const ScoredBox& p : proposals) candidates.push_back(p.box());
  // seed the head with the ground truths and two jittered copies each, so
  // positives exist before the proposal head warms up
  Rng jitter_rng(mix_seed(step_seed, 2));
  for (const BoundingBox& gt : gt_boxes) {
    candidates.push_back(gt);
    for (int j = 0; j < 2; ++j) {
      const double sx = std::exp(jitter_rng.uniform(-0.15, 0.15));
      const double sy = std::exp(jitter_rng.uniform(-0.15, 0.15));
      const double ox = jitter_rng.uniform(-0.15, 0.15) * gt.width();
      const double oy = jitter_rng.uniform(-0.15, 0.15) * gt.height();
      const double cx = gt.center_x() + ox;
      const double cy = gt.center_y() + oy;
      const double hw = 0.5 * gt.width() * sx;
      const double hh = 0.5 * gt.height() * sy;
      const auto jittered =
          clip(BoundingBox(cx - hw, cy - hh, cx + hw, cy + hh), image_w,
               image_h);
      if (jittered) candidates.push_back(*jittered);
    }
  }

  ParamMap head_grads;
  Tensor d_feat_rois(feat.shape());
  if (!candidates.empty()) {
    std::vector<AnchorLabel> roi_labels(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      double best = -1.0;
      std::ptrdiff_t best_g = -1;
      for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
        const double v = iou(candidates[i], gt_boxes[g]);
        if (v > best) {
          best = v;
          best_g = static_cast<std::ptrdiff_t>(g);
        }
      }
      if (best_g >= 0 && best >= config_.roi_pos_iou) {
        roi_labels[i] = {AnchorAssignment::Positive, best_g};
      } else {
        roi_labels[i] = {AnchorAssignment::Negative, -1};
      }
    }
    const std::vector<std::size_t> roi_sample =
        sample_rpn_batch(roi_labels, train.batch_size,
                         config_.head_pos_fraction, mix_seed(step_seed, 3));

    std::size_t roi_pos = 0;
    for (std::size_t idx : roi_sample) {
      if (roi_labels[idx].positive()) ++roi_pos;
    }
    stats.roi_positives = roi_pos;
    const double head_cls_norm = static_cast<double>(roi_sample.size());
    const double head_reg_norm =
        static_cast<double>(std::max<std::size_t>(1, roi_pos));

    for (std::size_t idx : roi_sample) {
      const BoundingBox& roi = candidates[idx];
      const RoiPooled pooled = roi_max_pool(
          feat, roi, static_cast<double>(stride_), config_.roi_pool);
      const Tensor flat = pooled.out.flattened();
      const Tensor hidden_pre = fully_connected_forward(
          flat, head_params_.at("head.fc1.weight"),
          head_params_.at("head.fc1.bias"));
      const Tensor hidden = relu_forward(hidden_pre);
      const Tensor logits =
          fully_connected_forward(hidden, head_params_.at("head.cls.weight"),
                                  head_params_.at("head.cls.bias"));

      const std::size_t target =
          roi_labels[idx].positive()
              ? 1 + gt_classes[static_cast<std::size_t>(
                        roi_labels[idx].matched_gt)]
              : 0;
      const SoftmaxCrossEntropyResult sce =
          softmax_cross_entropy(logits, target);
      stats.head_cls += sce.loss / head_cls_norm;

      Tensor d_logits(sce.grad_logits.shape());
      for (std::size_t i = 0; i < d_logits.size(); ++i) {
        d_logits[i] = sce.grad_logits[i] / head_cls_norm;
      }
      FullyConnectedGrads cls_grads = fully_connected_backward(
          hidden, head_params_.at("head.cls.weight"), d_logits);
      add_grad(head_grads, "head.cls.weight", std::move(cls_grads.weights));
      add_grad(head_grads, "head.cls.bias", std::move(cls_grads.bias));
      Tensor d_hidden = std::move(cls_grads.input);

      if (roi_labels[idx].positive()) {
        const BoundingBox& gt =
            gt_boxes[static_cast<std::size_t>(roi_labels[idx].matched_gt)];
        const Tensor reg = fully_connected_forward(
            hidden, head_params_.at("head.reg.weight"),
            head_params_.at("head.reg.bias"));
        const BoxDelta target_delta = encode(roi, gt);
        const Tensor target_t({4}, {target_delta.dx, target_delta.dy,
                                    target_delta.dw, target_delta.dh});
        const SmoothL1Result sl1 = smooth_l1(reg, target_t);
        stats.head_reg += sl1.loss / head_reg_norm;
        Tensor d_reg(sl1.grad_pred.shape());
        for (std::size_t i = 0; i < 4; ++i) {
          d_reg[i] = config_.loss_lambda * sl1.grad_pred[i] / head_reg_norm;
        }
        FullyConnectedGrads reg_grads = fully_connected_backward(
            hidden, head_params_.at("head.reg.weight"), d_reg);
        add_grad(head_grads, "head.reg.weight", std::move(reg_grads.weights));
        add_grad(head_grads, "head.reg.bias", std::move(reg_grads.bias));
        accumulate(d_hidden, reg_grads.input);
      }

      const Tensor d_hidden_pre = relu_backward(hidden_pre, d_hidden);
      FullyConnectedGrads fc1_grads = fully_connected_backward(
          flat, head_params_.at("head.fc1.weight"), d_hidden_pre);
      add_grad(head_grads, "head.fc1.weight", std::move(fc1_grads.weights));
      add_grad(head_grads, "head.fc1.bias", std::move(fc1_grads.bias));
      for (std::size_t i = 0; i < fc1_grads.input.size(); ++i) {
        d_feat_rois[pooled.argmax[i]] += fc1_grads.input[i];
      }
    }
  }

  // ---- backpropagate both heads into the shared features ----
  Conv2dGrads cls_back = conv2d_backward(
      trunk, head_params_.at("rpn.cls.weight"), 1, 0, d_cls_map);
  add_grad(head_grads, "rpn.cls.weight", std::move(cls_back.kernels));
  add_grad(head_grads, "rpn.cls.bias", std::move(cls_back.bias));
  Conv2dGrads reg_back = conv2d_backward(
      trunk, head_params_.at("rpn.reg.weight"), 1, 0, d_reg_map);
  add_grad(head_grads, "rpn.reg.weight", std::move(reg_back.kernels));
  add_grad(head_grads, "rpn.reg.bias", std::move(reg_back.bias));

  Tensor d_trunk = std::move(cls_back.input);
  accumulate(d_trunk, reg_back.input);
  const Tensor d_trunk_pre = relu_backward(trunk_pre, d_trunk);
  Conv2dGrads trunk_back = conv2d_backward(
      feat, head_params_.at("rpn.conv.weight"), 1, 1, d_trunk_pre);
  add_grad(head_grads, "rpn.conv.weight", std::move(trunk_back.kernels));
  add_grad(head_grads, "rpn.conv.bias", std::move(trunk_back.bias));

  Tensor d_feat = std::move(trunk_back.input);
  accumulate(d_feat, d_feat_rois);

  Gradients backbone_grads = backward(backbone_, acts, d_feat);

  sgd_step(backbone_.params, backbone_grads.params, train, backbone_velocity_);
  sgd_step(head_params_, head_grads, train, head_velocity_);

  stats.total = multi_task_loss(stats.rpn_cls, stats.rpn_reg,
                                config_.loss_lambda) +
                multi_task_loss(stats.head_cls, stats.head_reg,
                                config_.loss_lambda);
  return stats;
}

Checkpoint Detector::to_checkpoint(std::uint64_t iteration) const {
  Checkpoint ckpt;
  ckpt.iteration = iteration;
  ckpt.spec = backbone_;
  for (const auto& [name, tensor] : head_params_) {
    ckpt.spec.params[name] = tensor;
  }

  nlohmann::json meta;
  meta["kind"] = "fishdet_detector";
  meta["arch"] = to_string(config_.arch);
  meta["width_scale"] = config_.width_scale;
  meta["class_names"] = config_.class_names;
  meta["anchor_scales"] = config_.anchor_scales;
  meta["anchor_ratios"] = config_.anchor_ratios;
  meta["rpn_channels"] = config_.rpn_channels;
  meta["roi_pool"] = config_.roi_pool;
  meta["head_hidden"] = config_.head_hidden;
  meta["rpn_pos_iou"] = config_.rpn_pos_iou;
  meta["rpn_neg_iou"] = config_.rpn_neg_iou;
  meta["rpn_pos_fraction"] = config_.rpn_pos_fraction;
  meta["roi_pos_iou"] = config_.roi_pos_iou;
  meta["head_pos_fraction"] = config_.head_pos_fraction;
  meta["loss_lambda"] = config_.loss_lambda;
  meta["train_proposals"] = proposal_config_to_json(config_.train_proposals);
  meta["infer_proposals"] = proposal_config_to_json(config_.infer_proposals);
  meta["score_thresh"] = config_.score_thresh;
  meta["detection_nms"] = config_.detection_nms;
  meta["max_detections"] = config_.max_detections;
  ckpt.meta = meta.dump();
  return ckpt;
}

Detector Detector::from_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.meta);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("Detector::from_checkpoint: metadata is not JSON");
  }
  if (meta.value("kind", "") != "fishdet_detector") {
    throw std::runtime_error(
        "Detector::from_checkpoint: not a detector checkpoint");
  }

  Detector det;
  det.config_.arch = arch_from_string(meta.at("arch").get<std::string>());
  det.config_.width_scale = meta.at("width_scale").get<double>();
  det.config_.class_names =
      meta.at("class_names").get<std::vector<std::string>>();
  det.config_.anchor_scales =
      meta.at("anchor_scales").get<std::vector<double>>();
  det.config_.anchor_ratios =
      meta.at("anchor_ratios").get<std::vector<double>>();
  det.config_.rpn_channels = meta.at("rpn_channels").get<std::size_t>();
  det.config_.roi_pool = meta.at("roi_pool").get<std::size_t>();
  det.config_.head_hidden = meta.at("head_hidden").get<std::size_t>();
  det.config_.rpn_pos_iou = meta.at("rpn_pos_iou").get<double>();
  det.config_.rpn_neg_iou = meta.at("rpn_neg_iou").get<double>();
  det.config_.rpn_pos_fraction = meta.at("rpn_pos_fraction").get<double>();
  det.config_.roi_pos_iou = meta.at("roi_pos_iou").get<double>();
  det.config_.head_pos_fraction = meta.at("head_pos_fraction").get<double>();
  det.config_.loss_lambda = meta.at("loss_lambda").get<double>();
  det.config_.train_proposals =
      proposal_config_from_json(meta.at("train_proposals"));
  det.config_.infer_proposals =
      proposal_config_from_json(meta.at("infer_proposals"));
  det.config_.score_thresh = meta.at("score_thresh").get<double>();
  det.config_.detection_nms = meta.at("detection_nms").get<double>();
  det.config_.max_detections = meta.at("max_detections").get<std::size_t>();

  det.backbone_.input_shape = ckpt.spec.input_shape;
  det.backbone_.layers = ckpt.spec.layers;
  for (const auto& [name, tensor] : ckpt.spec.params) {
    if (name.rfind("rpn.", 0) == 0 || name.rfind("head.", 0) == 0) {
      det.head_params_[name] = tensor;
    } else {
      det.backbone_.params[name] = tensor;
    }
  }
  det.finish_setup();
  return det;
}

}  // namespace fishdet
