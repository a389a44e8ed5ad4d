#include "fishdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fishdet {
namespace {

bool clears(double value, double thresh, bool strict) {
  return strict ? value > thresh : value >= thresh;
}

// Greedy single-match walk over detections already in descending-score
// order. Each ground truth is consumed by at most one detection.
std::vector<bool> match_ordered(const std::vector<const BoundingBox*>& det_boxes,
                                const std::vector<BoundingBox>& gts,
                                double iou_thresh, bool strict_greater) {
  std::vector<bool> flags(det_boxes.size(), false);
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t d = 0; d < det_boxes.size(); ++d) {
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(*det_boxes[d], gts[g]);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size() && clears(best, iou_thresh, strict_greater)) {
      flags[d] = true;
      taken[best_g] = 1;
    }
  }
  return flags;
}

std::string format_ap(double ap) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.3f", ap);
  return buf;
}

}  // namespace

DetectionRecord::DetectionRecord(std::string image_id, std::string label,
                                 double score, BoundingBox box)
    : image_id_(std::move(image_id)),
      label_(std::move(label)),
      score_(score),
      box_(box) {
  if (image_id_.empty()) {
    throw std::invalid_argument("DetectionRecord: empty image id");
  }
  if (label_.empty()) {
    throw std::invalid_argument("DetectionRecord: empty label");
  }
  if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
    throw std::invalid_argument(
        "DetectionRecord: score must be finite in [0, 1]");
  }
}

std::vector<bool> match_detections(const std::vector<DetectionRecord>& dets,
                                   const std::vector<BoundingBox>& gts,
                                   double iou_thresh, bool strict_greater) {
  for (std::size_t i = 1; i < dets.size(); ++i) {
    if (dets[i].image_id() != dets[0].image_id() ||
        dets[i].label() != dets[0].label()) {
      throw std::invalid_argument(
          "match_detections: detections must share one class and image");
    }
  }
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].score() > dets[b].score();
                   });
  std::vector<const BoundingBox*> boxes;
  boxes.reserve(dets.size());
  for (std::size_t i : order) boxes.push_back(&dets[i].box());
  return match_ordered(boxes, gts, iou_thresh, strict_greater);
}

std::vector<PrPoint> pr_curve(const std::vector<bool>& flags,
                              std::size_t n_gt) {
  std::vector<PrPoint> points;
  points.reserve(flags.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (flags[k]) ++tp;
    const double precision =
        static_cast<double>(tp) / static_cast<double>(k + 1);
    const double recall =
        n_gt == 0 ? 0.0
                  : static_cast<double>(tp) / static_cast<double>(n_gt);
    points.push_back({precision, recall});
  }
  return points;
}

ApMethod ap_method_from_string(const std::string& name) {
  if (name == "all_points" || name == "all-points") return ApMethod::AllPoints;
  if (name == "eleven_point" || name == "11point" || name == "eleven-point") {
    return ApMethod::ElevenPoint;
  }
  throw std::invalid_argument("unknown AP method: " + name);
}

std::string to_string(ApMethod method) {
  return method == ApMethod::AllPoints ? "all_points" : "eleven_point";
}

double average_precision(const std::vector<PrPoint>& points, ApMethod method) {
  if (points.empty()) return 0.0;
  switch (method) {
    case ApMethod::AllPoints: {
      // right-max envelope, then stepwise area over the recall axis
      std::vector<double> envelope(points.size());
      double running = 0.0;
      for (std::size_t i = points.size(); i-- > 0;) {
        running = std::max(running, points[i].precision);
        envelope[i] = running;
      }
      double ap = 0.0;
      double prev_recall = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        ap += (points[i].recall - prev_recall) * envelope[i];
        prev_recall = points[i].recall;
      }
      return ap;
    }
    case ApMethod::ElevenPoint: {
      double total = 0.0;
      for (int i = 0; i <= 10; ++i) {
        const double t = static_cast<double>(i) / 10.0;
        double best = 0.0;
        for (const PrPoint& p : points) {
          if (p.recall >= t) best = std::max(best, p.precision);
        }
        total += best;
      }
      return total / 11.0;
    }
  }
  throw std::logic_error("unreachable");
}

double mean_ap(const std::vector<ClassAP>& class_aps) {
  if (class_aps.empty()) {
    throw std::invalid_argument("mean_ap: no classes evaluated");
  }
  double sum = 0.0;
  for (const ClassAP& c : class_aps) sum += c.ap;
  return sum / static_cast<double>(class_aps.size());
}

EvalReport evaluate(const std::vector<DetectionRecord>& detections,
                    const DatasetIndex& ground_truth,
                    const EvalConfig& config) {
  std::set<std::string> known_ids;
  for (const AnnotationRecord& record : ground_truth.records) {
    known_ids.insert(record.image_id);
  }
  std::string offenders;
  std::set<std::string> reported;
  for (const DetectionRecord& det : detections) {
    if (!known_ids.count(det.image_id()) && reported.insert(det.image_id()).second) {
      offenders += offenders.empty() ? det.image_id() : ", " + det.image_id();
    }
  }
  if (!offenders.empty()) {
    throw std::runtime_error("evaluate: detections reference unknown image ids: " +
                             offenders);
  }

  // class universe: every label with ground truth (after the min-count
  // filter) or with at least one detection
  std::map<std::string, std::size_t> gt_counts;
  for (const AnnotationRecord& record : ground_truth.records) {
    for (const AnnotatedObject& object : record.objects) {
      ++gt_counts[object.label];
    }
  }
  std::set<std::string> universe;
  for (const auto& [label, count] : gt_counts) {
    if (count >= config.min_class_gt) universe.insert(label);
  }
  for (const DetectionRecord& det : detections) {
    const auto it = gt_counts.find(det.label());
    const bool filtered_out =
        it != gt_counts.end() && it->second < config.min_class_gt;
    if (!filtered_out) universe.insert(det.label());
  }

  EvalReport report;
  report.config = config;
  for (const std::string& label : universe) {
    // per-image ground truths of this class
    std::map<std::string, std::vector<BoundingBox>> gts;
    std::size_t n_gt = 0;
    for (const AnnotationRecord& record : ground_truth.records) {
      for (const AnnotatedObject& object : record.objects) {
        if (object.label == label) {
          gts[record.image_id].push_back(object.box);
          ++n_gt;
        }
      }
    }

    // global descending-score order over this class, ties by input order
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (detections[i].label() == label) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return detections[a].score() > detections[b].score();
                     });

    // match per image while walking the global order
    std::map<std::string, std::vector<char>> taken;
    for (const auto& [image_id, boxes] : gts) {
      taken[image_id].assign(boxes.size(), 0);
    }
    std::vector<bool> flags;
    flags.reserve(order.size());
    for (std::size_t idx : order) {
      const DetectionRecord& det = detections[idx];
      const auto git = gts.find(det.image_id());
      bool tp = false;
      if (git != gts.end()) {
        std::vector<char>& used = taken[det.image_id()];
        double best = -1.0;
        std::size_t best_g = git->second.size();
        for (std::size_t g = 0; g < git->second.size(); ++g) {
          if (used[g]) continue;
          const double v = iou(det.box(), git->second[g]);
          if (v > best) {
            best = v;
            best_g = g;
          }
        }
        if (best_g < git->second.size() &&
            clears(best, config.iou_thresh, config.strict_greater)) {
          tp = true;
          used[best_g] = 1;
        }
      }
      flags.push_back(tp);
    }

    ClassAP entry;
    entry.label = label;
    entry.n_ground_truth = n_gt;
    entry.pr = pr_curve(flags, n_gt);
    entry.ap = average_precision(entry.pr, config.method);
    report.classes.push_back(std::move(entry));
  }

  report.map = mean_ap(report.classes);
  return report;
}

CheckpointSeries collate_checkpoint_results(
    const std::vector<std::pair<std::uint64_t, EvalReport>>& reports) {
  CheckpointSeries series;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i > 0 && reports[i].first <= reports[i - 1].first) {
      throw std::invalid_argument(
          "collate_checkpoint_results: iterations must be strictly increasing");
    }
    series.map_series.emplace_back(reports[i].first, reports[i].second.map);
    for (const ClassAP& c : reports[i].second.classes) {
      series.class_series[c.label].emplace_back(reports[i].first, c.ap);
    }
  }
  return series;
}

std::size_t best_checkpoint(const CheckpointSeries& series) {
  if (series.map_series.empty()) {
    throw std::invalid_argument("best_checkpoint: empty series");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < series.map_series.size(); ++i) {
    if (series.map_series[i].second > series.map_series[best].second) {
      best = i;
    }
  }
  return best;
}

std::vector<DetectionRecord> read_detections_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("read_detections_csv: cannot open " +
                             path.string());
  }
  const std::string expected_header =
      "image_id,species_label,score,xmin,ymin,xmax,ymax";
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path.string() + ":1: missing header line");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header) {
    throw std::runtime_error(path.string() + ":1: expected header '" +
                             expected_header + "'");
  }

  std::vector<DetectionRecord> detections;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::stringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 7) {
      throw std::runtime_error(where +
                               ": expected 7 comma-separated fields, got " +
                               std::to_string(fields.size()));
    }
    try {
      const double score = std::stod(fields[2]);
      const double xmin = std::stod(fields[3]);
      const double ymin = std::stod(fields[4]);
      const double xmax = std::stod(fields[5]);
      const double ymax = std::stod(fields[6]);
      detections.emplace_back(fields[0], fields[1], score,
                              BoundingBox(xmin, ymin, xmax, ymax));
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  return detections;
}

void write_detections_csv(const std::filesystem::path& path,
                          const std::vector<DetectionRecord>& detections) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("write_detections_csv: cannot open " +
                             path.string());
  }
  out << "image_id,species_label,score,xmin,ymin,xmax,ymax\n";
  char buf[160];
  for (const DetectionRecord& det : detections) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g",
                  det.score(), det.box().xmin(), det.box().ymin(),
                  det.box().xmax(), det.box().ymax());
    out << det.image_id() << ',' << det.label() << ',' << buf << '\n';
  }
}

std::string render_report_table(
    const std::vector<std::pair<std::string, EvalReport>>& models) {
  if (models.empty()) {
    throw std::invalid_argument("render_report_table: no reports");
  }
  std::set<std::string> labels;
  for (const auto& [name, report] : models) {
    for (const ClassAP& c : report.classes) labels.insert(c.label);
  }

  std::size_t label_width = std::string("Species").size();
  for (const std::string& label : labels) {
    label_width = std::max(label_width, label.size());
  }
  label_width += 2;

  std::ostringstream out;
  const EvalConfig& cfg = models.front().second.config;
  out << "# iou_thresh=" << cfg.iou_thresh
      << " comparison=" << (cfg.strict_greater ? ">" : ">=")
      << " method=" << to_string(cfg.method)
      << " min_class_gt=" << cfg.min_class_gt << "\n";

  out << std::string(label_width, ' ').replace(0, 7, "Species");
  std::vector<std::size_t> col_widths;
  for (const auto& [name, report] : models) {
    const std::string head = "AP on " + name;
    col_widths.push_back(std::max<std::size_t>(head.size() + 2, 12));
    out << std::string(col_widths.back() - head.size(), ' ') << head;
  }
  out << "\n";

  const auto find_ap = [](const EvalReport& report,
                          const std::string& label) -> const ClassAP* {
    for (const ClassAP& c : report.classes) {
      if (c.label == label) return &c;
    }
    return nullptr;
  };

  for (const std::string& label : labels) {
    out << label << std::string(label_width - label.size(), ' ');
    for (std::size_t m = 0; m < models.size(); ++m) {
      const ClassAP* entry = find_ap(models[m].second, label);
      const std::string cell = entry ? format_ap(entry->ap) : "-";
      out << std::string(col_widths[m] - cell.size(), ' ') << cell;
    }
    out << "\n";
  }

  out << "mAP" << std::string(label_width - 3, ' ');
  for (std::size_t m = 0; m < models.size(); ++m) {
    const std::string cell = format_ap(models[m].second.map);
    out << std::string(col_widths[m] - cell.size(), ' ') << cell;
  }
  out << "\n";
  return out.str();
}

std::string render_report_json(
    const std::vector<std::pair<std::string, EvalReport>>& models) {
  if (models.empty()) {
    throw std::invalid_argument("render_report_json: no reports");
  }
  nlohmann::json doc;
  const EvalConfig& cfg = models.front().second.config;
  doc["config"] = {{"iou_thresh", cfg.iou_thresh},
                   {"comparison", cfg.strict_greater ? ">" : ">="},
                   {"method", to_string(cfg.method)},
                   {"min_class_gt", cfg.min_class_gt}};
  doc["models"] = nlohmann::json::array();
  for (const auto& [name, report] : models) {
    nlohmann::json model;
    model["name"] = name;
    model["map"] = report.map;
    model["classes"] = nlohmann::json::array();
    for (const ClassAP& c : report.classes) {
      model["classes"].push_back({{"label", c.label},
                                  {"ap", c.ap},
                                  {"n_ground_truth", c.n_ground_truth}});
    }
    doc["models"].push_back(std::move(model));
  }
  return doc.dump(2) + "\n";
}

}  // namespace fishdet
