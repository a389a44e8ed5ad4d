#include "fishdet/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "fishdet/image.hpp"
#include "fishdet/random.hpp"

namespace fishdet {
namespace {

struct LoadedSplit {
  DatasetIndex index;
  std::vector<Tensor> images;  // aligned with index.records
};

LoadedSplit load_split(const std::filesystem::path& dataset_dir,
                       const DatasetIndex& full,
                       const std::filesystem::path& manifest) {
  LoadedSplit split;
  split.index = subset_by_ids(full, read_manifest(manifest));
  split.images.reserve(split.index.records.size());
  for (const AnnotationRecord& record : split.index.records) {
    const auto path = dataset_dir / "images" / (record.image_id + ".ppm");
    split.images.push_back(image_to_tensor(read_ppm(path)));
  }
  return split;
}

std::string checkpoint_name(std::uint64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06llu.ckpt",
                static_cast<unsigned long long>(iteration));
  return buf;
}

}  // namespace

ToyTrainResult train_toy(const std::filesystem::path& dataset_dir,
                         const ToyTrainOptions& options,
                         const std::filesystem::path& out_dir,
                         std::ostream* log) {
  validate(options.train);

  const DatasetIndex full = load_annotation_dir(dataset_dir / "annotations");
  const auto splits_dir = dataset_dir / "splits";
  LoadedSplit train = load_split(dataset_dir, full, splits_dir / "train.txt");
  LoadedSplit test = load_split(dataset_dir, full, splits_dir / "test.txt");
  if (train.index.records.empty()) {
    throw std::runtime_error("train_toy: empty train split");
  }

  // one fixed input geometry for the whole run
  const std::size_t img_w = train.index.records.front().width;
  const std::size_t img_h = train.index.records.front().height;
  for (const auto* split : {&train.index, &test.index}) {
    for (const AnnotationRecord& record : split->records) {
      if (record.width != img_w || record.height != img_h) {
        throw std::runtime_error(
            "train_toy: all images must share one size; " + record.image_id +
            " differs");
      }
    }
  }

  DetectorConfig det_config;
  det_config.arch = options.arch;
  det_config.width_scale = options.width_scale;
  det_config.class_names = full.catalog;
  det_config.anchor_scales = options.anchor_scales;
  det_config.anchor_ratios = options.anchor_ratios;
  Detector detector(det_config, {3, img_h, img_w}, options.train.seed);

  std::filesystem::create_directories(out_dir / "checkpoints");
  std::filesystem::create_directories(out_dir / "reports");

  const auto evaluate_test = [&]() {
    std::vector<DetectionRecord> detections;
    for (std::size_t i = 0; i < test.images.size(); ++i) {
      for (const Detection& det : detector.detect(test.images[i])) {
        detections.emplace_back(test.index.records[i].image_id, det.label,
                                det.score, det.box);
      }
    }
    return detections;
  };

  ToyTrainResult result;
  std::vector<std::size_t> order(train.index.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::uint64_t iterations = options.train.iterations;
  const std::uint64_t interval = options.train.snapshot_interval;
  std::size_t cursor = 0;
  std::uint64_t epoch = 0;

  for (std::uint64_t iter = 1; iter <= iterations; ++iter) {
    if (cursor == 0) {
      Rng rng(mix_seed(options.train.seed, 0x500000 + epoch));
      shuffle(order, rng);
      ++epoch;
    }
    const std::size_t pick = order[cursor];
    cursor = (cursor + 1) % order.size();

    const Detector::StepStats stats = detector.train_step(
        train.images[pick], train.index.records[pick].objects, options.train,
        mix_seed(options.train.seed, iter));

    if (log && (iter % 100 == 0 || iter == 1)) {
      *log << "iter " << iter << "  rpn_cls " << stats.rpn_cls << "  rpn_reg "
           << stats.rpn_reg << "  head_cls " << stats.head_cls << "  head_reg "
           << stats.head_reg << "\n";
    }

    if (iter % interval == 0 || iter == iterations) {
      const auto ckpt_path = out_dir / "checkpoints" / checkpoint_name(iter);
      save_checkpoint(ckpt_path, detector.to_checkpoint(iter));
      result.final_checkpoint = ckpt_path;

      std::vector<DetectionRecord> detections = evaluate_test();
      EvalReport report = evaluate(detections, test.index, options.eval);
      if (log) {
        *log << "snapshot " << iter << "  test mAP " << report.map << "\n";
      }
      {
        char name[32];
        std::snprintf(name, sizeof(name), "eval_%06llu.json",
                      static_cast<unsigned long long>(iter));
        std::ofstream out(out_dir / "reports" / name, std::ios::trunc);
        out << render_report_json({{to_string(options.arch), report}});
      }
      if (iter == iterations) result.final_detections = std::move(detections);
      result.reports.emplace_back(iter, std::move(report));
    }
  }

  result.series = collate_checkpoint_results(result.reports);

  {
    std::ofstream out(out_dir / "curve.tsv", std::ios::binary | std::ios::trunc);
    for (const auto& [iteration, map] : result.series.map_series) {
      char line[64];
      std::snprintf(line, sizeof(line), "%llu\t%.6f\n",
                    static_cast<unsigned long long>(iteration), map);
      out << line;
    }
  }
  {
    std::ofstream out(out_dir / "class_curves.tsv",
                      std::ios::binary | std::ios::trunc);
    for (const auto& [label, series] : result.series.class_series) {
      for (const auto& [iteration, ap] : series) {
        char line[160];
        std::snprintf(line, sizeof(line), "%s\t%llu\t%.6f\n", label.c_str(),
                      static_cast<unsigned long long>(iteration), ap);
        out << line;
      }
    }
  }
  write_detections_csv(out_dir / "final_detections.csv",
                       result.final_detections);
  return result;
}

}  // namespace fishdet
