#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fishdet/geometry.hpp"

namespace fishdet {

struct AnnotatedObject {
  std::string label;
  BoundingBox box;
};

/// One annotated image. Boxes are in the internal continuous convention and
/// always lie inside [0,width]x[0,height].
struct AnnotationRecord {
  std::string image_id;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<AnnotatedObject> objects;
};

/// Ordered record collection with the catalog of species labels that
/// actually appear. Image ids are unique.
struct DatasetIndex {
  std::vector<AnnotationRecord> records;
  std::vector<std::string> catalog;  // sorted, distinct
};

/// Validates records (unique ids, in-bounds boxes, nonempty labels) and
/// derives the catalog.
DatasetIndex make_index(std::vector<AnnotationRecord> records);

/// Reads one VOC annotation document. bndbox coordinates are 1-based
/// inclusive integers in the file; mins are shifted down by one on the way
/// in so the internal boxes are continuous. Missing elements raise a parse
/// error naming the element path.
AnnotationRecord parse_voc_xml(const std::string& xml);

/// Inverse of parse_voc_xml up to whitespace, with deterministic element
/// ordering.
std::string write_voc_xml(const AnnotationRecord& record);

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  std::uint64_t seed = 0;
};

void validate(const SplitSpec& spec);

/// Partition sizes under the floor rule: floor(train*N), floor(val*N),
/// remainder to test. Products within 1e-6 of an integer count as exact.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitSpec& spec);

struct SplitResult {
  DatasetIndex train;
  DatasetIndex val;
  DatasetIndex test;
};

/// Seeded uniform shuffle of whole images, then the floor-rule cut. The
/// three parts are disjoint and cover the input.
SplitResult split_dataset(const DatasetIndex& index, const SplitSpec& spec);

/// Annotation count per species label.
std::map<std::string, std::size_t> class_histogram(const DatasetIndex& index);

/// Drops annotations of species with fewer than min_count annotations, then
/// drops images left without objects. Idempotent.
DatasetIndex filter_by_min_samples(const DatasetIndex& index,
                                   std::size_t min_count);

/// Split manifests: one image id per line, newline-terminated.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::string>& image_ids);
std::vector<std::string> read_manifest(const std::filesystem::path& path);

/// Loads every *.xml under the directory (sorted by filename).
DatasetIndex load_annotation_dir(const std::filesystem::path& dir);

/// Records whose image_id appears in ids, in manifest order. Unknown ids
/// are an error.
DatasetIndex subset_by_ids(const DatasetIndex& index,
                           const std::vector<std::string>& ids);

}  // namespace fishdet
