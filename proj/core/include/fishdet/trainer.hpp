#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "fishdet/detector.hpp"
#include "fishdet/eval.hpp"
#include "fishdet/optim.hpp"

namespace fishdet {

/// Everything a desk-scale training run needs beyond the dataset itself.
struct ToyTrainOptions {
  Arch arch = Arch::Zf;
  double width_scale = 0.25;
  TrainConfig train;
  EvalConfig eval;
  std::vector<double> anchor_scales = {12.0, 24.0, 48.0};
  std::vector<double> anchor_ratios = {0.5, 1.0, 2.0};
};

struct ToyTrainResult {
  CheckpointSeries series;
  std::vector<std::pair<std::uint64_t, EvalReport>> reports;
  std::filesystem::path final_checkpoint;
  std::vector<DetectionRecord> final_detections;  // on the test split
};

/// Trains the proposal and classifier heads end-to-end on the train split,
/// snapshotting (checkpoint + test-split evaluation) every
/// snapshot_interval iterations. The dataset directory must hold images/,
/// annotations/ and splits/{train,val,test}.txt. Outputs: checkpoints/,
/// reports/, curve.tsv, class_curves.tsv and final_detections.csv under
/// out_dir.
ToyTrainResult train_toy(const std::filesystem::path& dataset_dir,
                         const ToyTrainOptions& options,
                         const std::filesystem::path& out_dir,
                         std::ostream* log = nullptr);

}  // namespace fishdet
