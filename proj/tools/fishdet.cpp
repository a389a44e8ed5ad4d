// fishdet: dataset synthesis, splitting, anchor/NMS inspection, toy
// detector training, evaluation and latency benchmarking from one binary.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "fishdet/checkpoint.hpp"
#include "fishdet/dataset.hpp"
#include "fishdet/detector.hpp"
#include "fishdet/eval.hpp"
#include "fishdet/image.hpp"
#include "fishdet/proposals.hpp"
#include "fishdet/synth.hpp"
#include "fishdet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (!item.empty()) values.push_back(std::stod(item));
  }
  if (values.empty()) {
    throw std::runtime_error("expected a comma-separated list, got '" + text +
                             "'");
  }
  return values;
}

void emit_config(const json& echo, const fs::path& out_dir = {}) {
  std::cout << "config " << echo.dump() << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "config.json", std::ios::trunc);
    out << echo.dump(2) << "\n";
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << text;
}

int run_synth(const fs::path& out_dir, const fishdet::SynthConfig& config) {
  json echo = {{"subcommand", "synth"},
               {"out", out_dir.string()},
               {"images", config.n_images},
               {"width", config.image_width},
               {"height", config.image_height},
               {"species", config.n_species},
               {"min_objects", config.min_objects},
               {"max_objects", config.max_objects},
               {"max_overlap", config.max_overlap},
               {"seed", config.seed}};
  emit_config(echo, out_dir);

  const fishdet::SynthDataset data = fishdet::synth_generate(config);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "annotations");
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const std::string& id = data.index.records[i].image_id;
    fishdet::write_ppm(out_dir / "images" / (id + ".ppm"), data.images[i]);
    write_text(out_dir / "annotations" / (id + ".xml"),
               fishdet::write_voc_xml(data.index.records[i]));
  }
  std::cout << "wrote " << data.images.size() << " images, "
            << data.index.catalog.size() << " species\n";
  return 0;
}

int run_split(const fs::path& dataset_dir, fishdet::SplitSpec spec) {
  json echo = {{"subcommand", "split"},
               {"dataset", dataset_dir.string()},
               {"train", spec.train},
               {"val", spec.val},
               {"test", spec.test},
               {"seed", spec.seed}};
  emit_config(echo, dataset_dir / "splits");

  const fishdet::DatasetIndex index =
      fishdet::load_annotation_dir(dataset_dir / "annotations");
  const fishdet::SplitResult split = fishdet::split_dataset(index, spec);

  const auto ids = [](const fishdet::DatasetIndex& part) {
    std::vector<std::string> out;
    out.reserve(part.records.size());
    for (const auto& record : part.records) out.push_back(record.image_id);
    return out;
  };
  fishdet::write_manifest(dataset_dir / "splits" / "train.txt",
                          ids(split.train));
  fishdet::write_manifest(dataset_dir / "splits" / "val.txt", ids(split.val));
  fishdet::write_manifest(dataset_dir / "splits" / "test.txt",
                          ids(split.test));
  std::cout << "split " << index.records.size() << " images into "
            << split.train.records.size() << "/" << split.val.records.size()
            << "/" << split.test.records.size() << "\n";
  return 0;
}

int run_anchors(std::size_t feat_w, std::size_t feat_h,
                const fishdet::AnchorGridSpec& spec, const std::string& out) {
  json echo = {{"subcommand", "anchors"}, {"feat_w", feat_w},
               {"feat_h", feat_h},        {"stride", spec.stride},
               {"scales", spec.scales},   {"ratios", spec.ratios}};
  emit_config(echo);

  const auto anchors = fishdet::generate_anchors(feat_w, feat_h, spec);
  std::ostringstream rows;
  rows << "index,xmin,ymin,xmax,ymax\n";
  char line[160];
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%.6f,%.6f\n", i,
                  anchors[i].xmin(), anchors[i].ymin(), anchors[i].xmax(),
                  anchors[i].ymax());
    rows << line;
  }
  if (out.empty()) {
    std::cout << rows.str();
  } else {
    write_text(out, rows.str());
  }
  return 0;
}

int run_nms(const fs::path& input, double iou_thresh, const std::string& out) {
  json echo = {{"subcommand", "nms"},
               {"input", input.string()},
               {"iou_thresh", iou_thresh}};
  emit_config(echo);

  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot open " + input.string());
  std::string header;
  if (!std::getline(in, header) ||
      (header != "score,xmin,ymin,xmax,ymax" &&
       header != "score,xmin,ymin,xmax,ymax\r")) {
    throw std::runtime_error(input.string() +
                             ":1: expected header 'score,xmin,ymin,xmax,ymax'");
  }
  std::vector<fishdet::ScoredBox> boxes;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    std::vector<double> values;
    try {
      while (std::getline(row, field, ',')) values.push_back(std::stod(field));
      if (values.size() != 5) throw std::runtime_error("expected 5 fields");
      boxes.emplace_back(
          fishdet::BoundingBox(values[1], values[2], values[3], values[4]),
          values[0]);
    } catch (const std::exception& e) {
      throw std::runtime_error(input.string() + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
  }

  const auto keep = fishdet::nms(boxes, iou_thresh);
  std::ostringstream rows;
  for (std::size_t k : keep) rows << k << "\n";
  if (out.empty()) {
    std::cout << rows.str();
  } else {
    write_text(out, rows.str());
  }
  return 0;
}

int run_evaluate(const std::vector<std::string>& detection_files,
                 const fs::path& annotations, const std::string& manifest,
                 const fishdet::EvalConfig& config,
                 const std::string& out_table, const std::string& out_json) {
  json echo = {{"subcommand", "evaluate"},
               {"detections", detection_files},
               {"annotations", annotations.string()},
               {"manifest", manifest},
               {"iou_thresh", config.iou_thresh},
               {"comparison", config.strict_greater ? ">" : ">="},
               {"method", fishdet::to_string(config.method)},
               {"min_class_gt", config.min_class_gt}};
  emit_config(echo);

  fishdet::DatasetIndex index = fishdet::load_annotation_dir(annotations);
  if (!manifest.empty()) {
    index = fishdet::subset_by_ids(index, fishdet::read_manifest(manifest));
  }

  std::vector<std::pair<std::string, fishdet::EvalReport>> models;
  for (const std::string& file : detection_files) {
    const auto detections = fishdet::read_detections_csv(file);
    models.emplace_back(fs::path(file).stem().string(),
                        fishdet::evaluate(detections, index, config));
  }

  const std::string table = fishdet::render_report_table(models);
  std::cout << table;
  if (!out_table.empty()) write_text(out_table, table);
  if (!out_json.empty()) {
    write_text(out_json, fishdet::render_report_json(models));
  }
  return 0;
}

int run_train_toy(const fs::path& dataset_dir, const fs::path& out_dir,
                  const fishdet::ToyTrainOptions& options) {
  json echo = {{"subcommand", "train-toy"},
               {"dataset", dataset_dir.string()},
               {"out", out_dir.string()},
               {"arch", fishdet::to_string(options.arch)},
               {"width_scale", options.width_scale},
               {"learning_rate", options.train.learning_rate},
               {"momentum", options.train.momentum},
               {"batch_size", options.train.batch_size},
               {"rpn_batch_size", options.train.rpn_batch_size},
               {"iterations", options.train.iterations},
               {"snapshot_interval", options.train.snapshot_interval},
               {"seed", options.train.seed},
               {"anchor_scales", options.anchor_scales},
               {"anchor_ratios", options.anchor_ratios},
               {"eval_iou", options.eval.iou_thresh},
               {"eval_method", fishdet::to_string(options.eval.method)}};
  emit_config(echo, out_dir);

  const fishdet::ToyTrainResult result =
      fishdet::train_toy(dataset_dir, options, out_dir, &std::cout);

  std::cout << "final checkpoint " << result.final_checkpoint.string() << "\n";
  for (const auto& [iteration, map] : result.series.map_series) {
    std::cout << "series " << iteration << " " << map << "\n";
  }
  const std::size_t best = fishdet::best_checkpoint(result.series);
  std::cout << "best checkpoint at iteration "
            << result.series.map_series[best].first << " with mAP "
            << result.series.map_series[best].second << "\n";
  return 0;
}

int run_bench(const fs::path& checkpoint_path, const fs::path& images_dir,
              const std::string& manifest, const std::string& out) {
  json echo = {{"subcommand", "bench"},
               {"checkpoint", checkpoint_path.string()},
               {"images", images_dir.string()},
               {"manifest", manifest}};
  emit_config(echo);

  const fishdet::Checkpoint ckpt = fishdet::load_checkpoint(checkpoint_path);
  const fishdet::Detector detector = fishdet::Detector::from_checkpoint(ckpt);

  std::vector<fs::path> files;
  if (manifest.empty()) {
    if (fs::is_directory(images_dir)) {
      for (const auto& entry : fs::directory_iterator(images_dir)) {
        if (entry.path().extension() == ".ppm") files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else {
    for (const std::string& id : fishdet::read_manifest(manifest)) {
      files.push_back(images_dir / (id + ".ppm"));
    }
  }
  if (files.empty()) throw std::runtime_error("bench: no images");

  std::vector<double> millis;
  std::size_t total_detections = 0;
  for (const fs::path& file : files) {
    const fishdet::Tensor image =
        fishdet::image_to_tensor(fishdet::read_ppm(file));
    const auto start = std::chrono::steady_clock::now();
    const auto detections = detector.detect(image);
    const auto stop = std::chrono::steady_clock::now();
    total_detections += detections.size();
    millis.push_back(
        std::chrono::duration<double, std::milli>(stop - start).count());
  }

  std::vector<double> sorted = millis;
  std::sort(sorted.begin(), sorted.end());
  double mean_ms = 0.0;
  for (double v : millis) mean_ms += v;
  mean_ms /= static_cast<double>(millis.size());
  const double median_ms = sorted[sorted.size() / 2];
  const double p95_ms =
      sorted[std::min(sorted.size() - 1,
                      static_cast<std::size_t>(0.95 * static_cast<double>(
                                                          sorted.size())))];
  const double fps = 1000.0 / mean_ms;

  json stats = {{"images", millis.size()},
                {"detections", total_detections},
                {"mean_ms", mean_ms},
                {"median_ms", median_ms},
                {"p95_ms", p95_ms},
                {"fps", fps}};
  std::cout << "bench " << stats.dump() << "\n";
  if (!out.empty()) write_text(out, stats.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fish-detection pipeline toolkit"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out;
  fishdet::SynthConfig synth_config;
  synth->add_option("--out", synth_out, "output dataset directory")
      ->required();
  synth->add_option("--images", synth_config.n_images, "number of images");
  synth->add_option("--width", synth_config.image_width, "image width");
  synth->add_option("--height", synth_config.image_height, "image height");
  synth->add_option("--species", synth_config.n_species, "species styles");
  synth->add_option("--min-objects", synth_config.min_objects,
                    "minimum objects per image");
  synth->add_option("--max-objects", synth_config.max_objects,
                    "maximum objects per image");
  synth->add_option("--max-overlap", synth_config.max_overlap,
                    "highest tolerated IoU between objects");
  synth->add_option("--seed", synth_config.seed, "random seed");

  // --- split ---
  auto* split = app.add_subcommand("split", "write train/val/test manifests");
  std::string split_dataset_dir;
  fishdet::SplitSpec split_spec;
  split->add_option("--dataset", split_dataset_dir,
                    "dataset directory (expects annotations/)")
      ->required();
  split->add_option("--train", split_spec.train, "train fraction");
  split->add_option("--val", split_spec.val, "validation fraction");
  split->add_option("--test", split_spec.test, "test fraction");
  split->add_option("--seed", split_spec.seed, "shuffle seed");

  // --- anchors ---
  auto* anchors = app.add_subcommand("anchors", "emit an anchor grid as CSV");
  std::size_t feat_w = 0;
  std::size_t feat_h = 0;
  double anchor_stride = 16.0;
  std::string anchor_scales = "64,128,256";
  std::string anchor_ratios = "0.5,1,2";
  std::string anchors_out;
  anchors->add_option("--feat-w", feat_w, "feature-map width")->required();
  anchors->add_option("--feat-h", feat_h, "feature-map height")->required();
  anchors->add_option("--stride", anchor_stride, "pixels per cell");
  anchors->add_option("--scales", anchor_scales, "anchor sides, px");
  anchors->add_option("--ratios", anchor_ratios, "height/width ratios");
  anchors->add_option("--out", anchors_out, "output file (default stdout)");

  // --- nms ---
  auto* nms_cmd = app.add_subcommand("nms", "greedy suppression over a CSV");
  std::string nms_input;
  double nms_iou = 0.7;
  std::string nms_out;
  nms_cmd
      ->add_option("--input", nms_input,
                   "CSV with header score,xmin,ymin,xmax,ymax")
      ->required();
  nms_cmd->add_option("--iou", nms_iou, "suppression threshold");
  nms_cmd->add_option("--out", nms_out, "output file (default stdout)");

  // --- evaluate ---
  auto* evaluate = app.add_subcommand("evaluate", "score detections vs VOC");
  std::vector<std::string> eval_detections;
  std::string eval_annotations;
  std::string eval_manifest;
  std::string eval_method = "all_points";
  std::string eval_out_table;
  std::string eval_out_json;
  fishdet::EvalConfig eval_config;
  evaluate
      ->add_option("--detections", eval_detections,
                   "detection CSV files, one AP column each")
      ->required()
      ->expected(-1);
  evaluate->add_option("--annotations", eval_annotations, "VOC XML directory")
      ->required();
  evaluate->add_option("--manifest", eval_manifest,
                       "restrict to the ids in this manifest");
  evaluate->add_option("--iou", eval_config.iou_thresh, "match threshold");
  evaluate->add_flag("--strict-greater", eval_config.strict_greater,
                     "require IoU strictly above the threshold");
  evaluate->add_option("--method", eval_method,
                       "all_points or eleven_point interpolation");
  evaluate->add_option("--min-class-gt", eval_config.min_class_gt,
                       "drop classes with fewer ground truths");
  evaluate->add_option("--out-table", eval_out_table, "write the table here");
  evaluate->add_option("--out-json", eval_out_json, "write the report here");

  // --- train-toy ---
  auto* train = app.add_subcommand("train-toy", "desk-scale detector training");
  std::string train_dataset;
  std::string train_out;
  std::string train_arch = "zf";
  std::string train_scales = "12,24,48";
  std::string train_ratios = "0.5,1,2";
  std::string train_method = "all_points";
  fishdet::ToyTrainOptions options;
  train->add_option("--dataset", train_dataset, "dataset directory")
      ->required();
  train->add_option("--out", train_out, "run output directory")->required();
  train->add_option("--arch", train_arch, "zf, cnn-m or vgg16");
  train->add_option("--width-scale", options.width_scale,
                    "channel multiplier in (0,1]");
  train->add_option("--lr", options.train.learning_rate, "learning rate");
  train->add_option("--momentum", options.train.momentum, "SGD momentum");
  train->add_option("--batch-size", options.train.batch_size,
                    "classifier minibatch");
  train->add_option("--rpn-batch-size", options.train.rpn_batch_size,
                    "anchor minibatch");
  train->add_option("--iterations", options.train.iterations,
                    "total SGD iterations");
  train->add_option("--snapshot-interval", options.train.snapshot_interval,
                    "iterations between checkpoints");
  train->add_option("--seed", options.train.seed, "run seed");
  train->add_option("--anchor-scales", train_scales, "anchor sides, px");
  train->add_option("--anchor-ratios", train_ratios, "height/width ratios");
  train->add_option("--eval-iou", options.eval.iou_thresh,
                    "evaluation IoU threshold");
  train->add_option("--eval-method", train_method,
                    "all_points or eleven_point");

  // --- bench ---
  auto* bench = app.add_subcommand("bench", "per-image detection latency");
  std::string bench_checkpoint;
  std::string bench_images;
  std::string bench_manifest;
  std::string bench_out;
  bench->add_option("--checkpoint", bench_checkpoint, "detector checkpoint")
      ->required();
  bench->add_option("--images", bench_images, "PPM image directory")
      ->required();
  bench->add_option("--manifest", bench_manifest,
                    "restrict to the ids in this manifest");
  bench->add_option("--out", bench_out, "write the stats JSON here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(synth_out, synth_config);
    if (*split) return run_split(split_dataset_dir, split_spec);
    if (*anchors) {
      fishdet::AnchorGridSpec spec;
      spec.stride = anchor_stride;
      spec.scales = parse_double_list(anchor_scales);
      spec.ratios = parse_double_list(anchor_ratios);
      return run_anchors(feat_w, feat_h, spec, anchors_out);
    }
    if (*nms_cmd) return run_nms(nms_input, nms_iou, nms_out);
    if (*evaluate) {
      eval_config.method = fishdet::ap_method_from_string(eval_method);
      return run_evaluate(eval_detections, eval_annotations, eval_manifest,
                          eval_config, eval_out_table, eval_out_json);
    }
    if (*train) {
      options.arch = fishdet::arch_from_string(train_arch);
      options.anchor_scales = parse_double_list(train_scales);
      options.anchor_ratios = parse_double_list(train_ratios);
      options.eval.method = fishdet::ap_method_from_string(train_method);
      return run_train_toy(train_dataset, train_out, options);
    }
    if (*bench) {
      return run_bench(bench_checkpoint, bench_images, bench_manifest,
                       bench_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
