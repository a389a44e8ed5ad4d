#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fishdet/dataset.hpp"
#include "fishdet/geometry.hpp"

namespace fishdet {

/// One scored detection: where, what and how confident.
class DetectionRecord {
 public:
  DetectionRecord(std::string image_id, std::string label, double score,
                  BoundingBox box);

  const std::string& image_id() const { return image_id_; }
  const std::string& label() const { return label_; }
  double score() const { return score_; }
  const BoundingBox& box() const { return box_; }

 private:
  std::string image_id_;
  std::string label_;
  double score_;
  BoundingBox box_;
};

/// Greedy detection-to-ground-truth matching for one class on one image.
/// Detections are processed in descending score (ties keep input order); a
/// detection is a true positive when its best-IoU still-unmatched ground
/// truth clears iou_thresh, and that ground truth is then consumed. Flags
/// come back in processing order.
std::vector<bool> match_detections(const std::vector<DetectionRecord>& dets,
                                   const std::vector<BoundingBox>& gts,
                                   double iou_thresh = 0.5,
                                   bool strict_greater = false);

struct PrPoint {
  double precision;
  double recall;
};

/// Precision/recall after each detection prefix. flags must be in
/// descending-score order. n_gt == 0 pins recall to zero.
std::vector<PrPoint> pr_curve(const std::vector<bool>& flags, std::size_t n_gt);

enum class ApMethod { AllPoints, ElevenPoint };

ApMethod ap_method_from_string(const std::string& name);
std::string to_string(ApMethod method);

/// all_points: area under the right-max-monotonized PR curve.
/// eleven_point: mean of the max precision at recalls {0, 0.1, ..., 1.0}.
double average_precision(const std::vector<PrPoint>& points, ApMethod method);

struct ClassAP {
  std::string label;
  double ap = 0.0;
  std::size_t n_ground_truth = 0;
  std::vector<PrPoint> pr;
};

/// Unweighted arithmetic mean; empty input is an error.
double mean_ap(const std::vector<ClassAP>& class_aps);

struct EvalConfig {
  double iou_thresh = 0.5;
  bool strict_greater = false;  // default: IoU >= thresh counts
  ApMethod method = ApMethod::AllPoints;
  std::size_t min_class_gt = 0;  // drop classes with fewer ground truths
};

struct EvalReport {
  std::vector<ClassAP> classes;  // sorted by label
  double map = 0.0;
  EvalConfig config;
};

/// Pools detections per class across images (global score order, ties by
/// input order), matches per image, and aggregates AP per class. Classes
/// with ground truth but no detections score 0; classes with neither are
/// absent. Detections for unknown image ids are an error.
EvalReport evaluate(const std::vector<DetectionRecord>& detections,
                    const DatasetIndex& ground_truth,
                    const EvalConfig& config = {});

struct CheckpointSeries {
  std::vector<std::pair<std::uint64_t, double>> map_series;
  std::map<std::string, std::vector<std::pair<std::uint64_t, double>>>
      class_series;
};

/// Orders per-checkpoint reports into plot-ready series; iterations must be
/// strictly increasing.
CheckpointSeries collate_checkpoint_results(
    const std::vector<std::pair<std::uint64_t, EvalReport>>& reports);

/// Index of the best checkpoint (highest mAP, earliest on ties).
std::size_t best_checkpoint(const CheckpointSeries& series);

/// Detection results file: mandatory header, one comma-separated record per
/// line. Parse errors carry the file and line number.
std::vector<DetectionRecord> read_detections_csv(
    const std::filesystem::path& path);
void write_detections_csv(const std::filesystem::path& path,
                          const std::vector<DetectionRecord>& detections);

/// Per-class AP table over one or more models, 3-decimal APs, mAP last.
std::string render_report_table(
    const std::vector<std::pair<std::string, EvalReport>>& models);
/// The same content as a JSON document.
std::string render_report_json(
    const std::vector<std::pair<std::string, EvalReport>>& models);

}  // namespace fishdet
