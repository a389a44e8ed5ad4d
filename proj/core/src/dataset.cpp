#include "fishdet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "fishdet/random.hpp"

namespace fishdet {
namespace {

namespace pt = boost::property_tree;

[[noreturn]] void parse_fail(const std::string& what) {
  throw std::runtime_error("parse_voc_xml: " + what);
}

const pt::ptree& require_child(const pt::ptree& tree, const std::string& key,
                               const std::string& path) {
  const auto child = tree.get_child_optional(key);
  if (!child) parse_fail(path + " missing");
  return *child;
}

double require_number(const pt::ptree& tree, const std::string& key,
                      const std::string& path) {
  const auto child = tree.get_child_optional(key);
  if (!child) parse_fail(path + " missing");
  try {
    return child->get_value<double>();
  } catch (const pt::ptree_error&) {
    parse_fail(path + " is not numeric");
  }
}

std::string strip_extension(const std::string& filename) {
  const auto dot = filename.find_last_of('.');
  if (dot == std::string::npos || dot == 0) return filename;
  return filename.substr(0, dot);
}

std::size_t fuzzy_floor(double x) {
  // fraction*N is an exact count in intent; absorb representation error
  // before flooring so e.g. 0.7*10 counts as 7.
  const double nearest = std::round(x);
  if (std::abs(x - nearest) < 1e-6) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::floor(x));
}

}  // namespace

DatasetIndex make_index(std::vector<AnnotationRecord> records) {
  std::set<std::string> seen;
  std::set<std::string> labels;
  for (const AnnotationRecord& record : records) {
    if (record.image_id.empty()) {
      throw std::invalid_argument("make_index: empty image id");
    }
    if (!seen.insert(record.image_id).second) {
      throw std::invalid_argument("make_index: duplicate image id " +
                                  record.image_id);
    }
    if (record.width == 0 || record.height == 0) {
      throw std::invalid_argument("make_index: image " + record.image_id +
                                  " has zero size");
    }
    for (const AnnotatedObject& object : record.objects) {
      if (object.label.empty()) {
        throw std::invalid_argument("make_index: empty label in image " +
                                    record.image_id);
      }
      const BoundingBox& b = object.box;
      if (b.xmin() < 0.0 || b.ymin() < 0.0 ||
          b.xmax() > static_cast<double>(record.width) ||
          b.ymax() > static_cast<double>(record.height)) {
        throw std::invalid_argument("make_index: box outside image bounds in " +
                                    record.image_id);
      }
      labels.insert(object.label);
    }
  }
  DatasetIndex index;
  index.records = std::move(records);
  index.catalog.assign(labels.begin(), labels.end());
  return index;
}

AnnotationRecord parse_voc_xml(const std::string& xml) {
  pt::ptree doc;
  try {
    std::istringstream stream(xml);
    pt::read_xml(stream, doc, pt::xml_parser::trim_whitespace);
  } catch (const pt::ptree_error& e) {
    parse_fail(std::string("malformed document: ") + e.what());
  }

  const pt::ptree& annotation = require_child(doc, "annotation", "annotation");

  AnnotationRecord record;
  const auto filename = annotation.get_optional<std::string>("filename");
  if (!filename) parse_fail("filename missing");
  record.image_id = strip_extension(*filename);
  if (record.image_id.empty()) parse_fail("filename is empty");

  const pt::ptree& size = require_child(annotation, "size", "size");
  const double width = require_number(size, "width", "size/width");
  const double height = require_number(size, "height", "size/height");
  if (!(width > 0.0) || !(height > 0.0)) {
    parse_fail("size/width and size/height must be positive");
  }
  record.width = static_cast<std::size_t>(width);
  record.height = static_cast<std::size_t>(height);

  for (const auto& [key, node] : annotation) {
    if (key != "object") continue;
    const auto name = node.get_optional<std::string>("name");
    if (!name || name->empty()) parse_fail("object/name missing");
    const pt::ptree& bndbox = require_child(node, "bndbox", "object/bndbox");
    const double xmin = require_number(bndbox, "xmin", "object/bndbox/xmin");
    const double ymin = require_number(bndbox, "ymin", "object/bndbox/ymin");
    const double xmax = require_number(bndbox, "xmax", "object/bndbox/xmax");
    const double ymax = require_number(bndbox, "ymax", "object/bndbox/ymax");

    // 1-based inclusive pixel coordinates in the file; continuous inside.
    const double x0 = xmin - 1.0;
    const double y0 = ymin - 1.0;
    if (!(x0 < xmax) || !(y0 < ymax)) {
      throw std::runtime_error(
          "parse_voc_xml: degenerate bndbox after convention conversion");
    }
    if (x0 < 0.0 || y0 < 0.0 || xmax > width || ymax > height) {
      throw std::runtime_error("parse_voc_xml: bndbox outside image bounds");
    }
    record.objects.push_back({*name, BoundingBox(x0, y0, xmax, ymax)});
  }
  return record;
}

std::string write_voc_xml(const AnnotationRecord& record) {
  pt::ptree annotation;
  annotation.put("filename", record.image_id + ".ppm");
  annotation.put("size.width", record.width);
  annotation.put("size.height", record.height);
  annotation.put("size.depth", 3);
  for (const AnnotatedObject& object : record.objects) {
    pt::ptree node;
    node.put("name", object.label);
    node.put("bndbox.xmin", std::llround(object.box.xmin()) + 1);
    node.put("bndbox.ymin", std::llround(object.box.ymin()) + 1);
    node.put("bndbox.xmax", std::llround(object.box.xmax()));
    node.put("bndbox.ymax", std::llround(object.box.ymax()));
    annotation.add_child("object", node);
  }
  pt::ptree doc;
  doc.add_child("annotation", annotation);

  std::ostringstream out;
  pt::write_xml(out, doc,
                pt::xml_writer_settings<std::string>(' ', 2));
  return out.str();
}

void validate(const SplitSpec& spec) {
  const double fractions[3] = {spec.train, spec.val, spec.test};
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw std::invalid_argument("SplitSpec: fractions must lie in [0, 1]");
    }
  }
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    throw std::invalid_argument("SplitSpec: fractions must sum to 1");
  }
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitSpec& spec) {
  validate(spec);
  const double dn = static_cast<double>(n);
  std::size_t n_train = fuzzy_floor(spec.train * dn);
  std::size_t n_val = fuzzy_floor(spec.val * dn);
  if (n_train > n) n_train = n;
  if (n_train + n_val > n) n_val = n - n_train;
  return {n_train, n_val, n - n_train - n_val};
}

SplitResult split_dataset(const DatasetIndex& index, const SplitSpec& spec) {
  if (index.records.empty()) {
    throw std::invalid_argument("split_dataset: dataset is empty");
  }
  const auto sizes = split_sizes(index.records.size(), spec);

  std::vector<std::size_t> order(index.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  shuffle(order, rng);

  const auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<AnnotationRecord> records;
    records.reserve(count);
    for (std::size_t i = begin; i < begin + count; ++i) {
      records.push_back(index.records[order[i]]);
    }
    return make_index(std::move(records));
  };
  SplitResult result;
  result.train = take(0, sizes[0]);
  result.val = take(sizes[0], sizes[1]);
  result.test = take(sizes[0] + sizes[1], sizes[2]);
  return result;
}

std::map<std::string, std::size_t> class_histogram(const DatasetIndex& index) {
  std::map<std::string, std::size_t> counts;
  for (const AnnotationRecord& record : index.records) {
    for (const AnnotatedObject& object : record.objects) {
      ++counts[object.label];
    }
  }
  return counts;
}

DatasetIndex filter_by_min_samples(const DatasetIndex& index,
                                   std::size_t min_count) {
  const auto counts = class_histogram(index);
  std::vector<AnnotationRecord> kept;
  for (const AnnotationRecord& record : index.records) {
    AnnotationRecord filtered;
    filtered.image_id = record.image_id;
    filtered.width = record.width;
    filtered.height = record.height;
    for (const AnnotatedObject& object : record.objects) {
      if (counts.at(object.label) >= min_count) {
        filtered.objects.push_back(object);
      }
    }
    if (!filtered.objects.empty()) kept.push_back(std::move(filtered));
  }
  return make_index(std::move(kept));
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::string>& image_ids) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("write_manifest: cannot open " + path.string());
  }
  for (const std::string& id : image_ids) out << id << "\n";
  if (!out) {
    throw std::runtime_error("write_manifest: write failed for " +
                             path.string());
  }
}

std::vector<std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("read_manifest: cannot open " + path.string());
  }
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

DatasetIndex load_annotation_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("load_annotation_dir: not a directory: " +
                             dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  std::vector<AnnotationRecord> records;
  records.reserve(files.size());
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
      records.push_back(parse_voc_xml(buffer.str()));
    } catch (const std::exception& e) {
      throw std::runtime_error(file.string() + ": " + e.what());
    }
  }
  return make_index(std::move(records));
}

DatasetIndex subset_by_ids(const DatasetIndex& index,
                           const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> lookup;
  for (std::size_t i = 0; i < index.records.size(); ++i) {
    lookup[index.records[i].image_id] = i;
  }
  std::vector<AnnotationRecord> records;
  std::string missing;
  for (const std::string& id : ids) {
    const auto it = lookup.find(id);
    if (it == lookup.end()) {
      missing += missing.empty() ? id : ", " + id;
      continue;
    }
    records.push_back(index.records[it->second]);
  }
  if (!missing.empty()) {
    throw std::runtime_error("subset_by_ids: unknown image ids: " + missing);
  }
  return make_index(std::move(records));
}

}  // namespace fishdet
