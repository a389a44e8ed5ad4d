#include <array>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "fishdet/dataset.hpp"

using namespace fishdet;

namespace {

const char* kFixtureXml = R"(<?xml version="1.0"?>
<annotation>
  <filename>frame_0001.jpg</filename>
  <size>
    <width>640</width>
    <height>480</height>
    <depth>3</depth>
  </size>
  <object>
    <name>sand whiting</name>
    <bndbox>
      <xmin>1</xmin>
      <ymin>1</ymin>
      <xmax>11</xmax>
      <ymax>11</ymax>
    </bndbox>
  </object>
</annotation>
)";

AnnotationRecord small_record(const std::string& id, const std::string& label,
                              const BoundingBox& box) {
  AnnotationRecord record;
  record.image_id = id;
  record.width = 100;
  record.height = 100;
  record.objects.push_back({label, box});
  return record;
}

}  // namespace

TEST_CASE("parse_voc_xml: 1-based inclusive coordinates become continuous") {
  const AnnotationRecord record = parse_voc_xml(kFixtureXml);
  CHECK(record.image_id == "frame_0001");
  CHECK(record.width == 640);
  CHECK(record.height == 480);
  REQUIRE(record.objects.size() == 1);
  CHECK(record.objects[0].label == "sand whiting");
  CHECK(record.objects[0].box == BoundingBox(0, 0, 11, 11));
}

TEST_CASE("write_voc_xml inverts parse_voc_xml") {
  const AnnotationRecord record = parse_voc_xml(kFixtureXml);
  const AnnotationRecord round = parse_voc_xml(write_voc_xml(record));
  CHECK(round.image_id == record.image_id);
  CHECK(round.width == record.width);
  CHECK(round.height == record.height);
  REQUIRE(round.objects.size() == record.objects.size());
  CHECK(round.objects[0].label == record.objects[0].label);
  CHECK(round.objects[0].box == record.objects[0].box);
}

TEST_CASE("parse_voc_xml: errors name the missing element") {
  const char* no_bndbox = R"(<annotation>
    <filename>x.jpg</filename>
    <size><width>10</width><height>10</height></size>
    <object><name>crab</name></object>
  </annotation>)";
  CHECK_THROWS_WITH_AS(parse_voc_xml(no_bndbox),
                       "parse_voc_xml: object/bndbox missing",
                       std::runtime_error);

  const char* no_width = R"(<annotation>
    <filename>x.jpg</filename>
    <size><height>10</height></size>
  </annotation>)";
  CHECK_THROWS_WITH_AS(parse_voc_xml(no_width),
                       "parse_voc_xml: size/width missing", std::runtime_error);

  CHECK_THROWS_AS(parse_voc_xml("<annotation><unterminated>"),
                  std::runtime_error);
  CHECK_THROWS_AS(parse_voc_xml("<notvoc/>"), std::runtime_error);

  const char* degenerate = R"(<annotation>
    <filename>x.jpg</filename>
    <size><width>10</width><height>10</height></size>
    <object><name>crab</name>
      <bndbox><xmin>9</xmin><ymin>1</ymin><xmax>8</xmax><ymax>5</ymax></bndbox>
    </object>
  </annotation>)";
  CHECK_THROWS_AS(parse_voc_xml(degenerate), std::runtime_error);
}

TEST_CASE("split_sizes follows the floor rule") {
  SplitSpec spec;
  CHECK(split_sizes(10, spec) == std::array<std::size_t, 3>{7, 1, 2});
  CHECK(split_sizes(4909, spec) == std::array<std::size_t, 3>{3436, 490, 983});
  CHECK(split_sizes(1, spec) == std::array<std::size_t, 3>{0, 0, 1});

  SplitSpec bad;
  bad.train = 0.9;
  bad.val = 0.2;
  bad.test = -0.1;
  CHECK_THROWS_AS(split_sizes(10, bad), std::invalid_argument);
  SplitSpec off;
  off.train = 0.5;
  off.val = 0.1;
  off.test = 0.3;
  CHECK_THROWS_AS(split_sizes(10, off), std::invalid_argument);
}

TEST_CASE("split_dataset: exact partition, deterministic under seed") {
  std::vector<AnnotationRecord> records;
  for (int i = 0; i < 100; ++i) {
    records.push_back(small_record("img_" + std::to_string(i), "fish",
                                   BoundingBox(1, 1, 9, 9)));
  }
  const DatasetIndex index = make_index(records);

  SplitSpec spec;
  spec.seed = 5;
  const SplitResult split = split_dataset(index, spec);
  CHECK(split.train.records.size() == 70);
  CHECK(split.val.records.size() == 10);
  CHECK(split.test.records.size() == 20);

  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const AnnotationRecord& record : part->records) {
      CHECK(seen.insert(record.image_id).second);  // disjoint
    }
  }
  CHECK(seen.size() == 100);  // covering

  const SplitResult again = split_dataset(index, spec);
  for (std::size_t i = 0; i < split.train.records.size(); ++i) {
    CHECK(split.train.records[i].image_id == again.train.records[i].image_id);
  }

  SplitSpec other = spec;
  other.seed = 6;
  const SplitResult different = split_dataset(index, other);
  bool any_difference = false;
  for (std::size_t i = 0; i < split.train.records.size(); ++i) {
    if (split.train.records[i].image_id != different.train.records[i].image_id) {
      any_difference = true;
      break;
    }
  }
  CHECK(any_difference);
}

TEST_CASE("split_dataset: empty input is an error") {
  CHECK_THROWS_AS(split_dataset(DatasetIndex{}, SplitSpec{}),
                  std::invalid_argument);
}

TEST_CASE("class_histogram counts annotations") {
  CHECK(class_histogram(DatasetIndex{}).empty());

  AnnotationRecord two = small_record("a", "crab", BoundingBox(1, 1, 5, 5));
  two.objects.push_back({"crab", BoundingBox(10, 10, 20, 20)});
  const DatasetIndex index = make_index({two});
  const auto counts = class_histogram(index);
  REQUIRE(counts.size() == 1);
  CHECK(counts.at("crab") == 2);

  AnnotationRecord mixed = small_record("b", "ray", BoundingBox(1, 1, 5, 5));
  mixed.objects.push_back({"crab", BoundingBox(10, 10, 20, 20)});
  mixed.objects.push_back({"tuna", BoundingBox(30, 30, 40, 40)});
  const auto counts2 = class_histogram(make_index({two, mixed}));
  CHECK(counts2.at("crab") == 3);
  CHECK(counts2.at("ray") == 1);
  CHECK(counts2.at("tuna") == 1);

  std::size_t total = 0;
  for (const auto& [label, n] : counts2) total += n;
  CHECK(total == 4);
}

TEST_CASE("filter_by_min_samples drops rare classes and empty images") {
  std::vector<AnnotationRecord> records;
  for (int i = 0; i < 5; ++i) {
    records.push_back(small_record("a" + std::to_string(i), "common",
                                   BoundingBox(1, 1, 9, 9)));
  }
  records.push_back(small_record("b0", "rare", BoundingBox(1, 1, 9, 9)));
  records.push_back(small_record("b1", "rare", BoundingBox(1, 1, 9, 9)));
  const DatasetIndex index = make_index(records);

  SUBCASE("min_count 0 is the identity") {
    const DatasetIndex same = filter_by_min_samples(index, 0);
    CHECK(same.records.size() == index.records.size());
    CHECK(same.catalog == index.catalog);
  }
  SUBCASE("threshold above every count empties the index") {
    const DatasetIndex empty = filter_by_min_samples(index, 100);
    CHECK(empty.records.empty());
    CHECK(empty.catalog.empty());
  }
  SUBCASE("under-represented species disappear") {
    const DatasetIndex filtered = filter_by_min_samples(index, 3);
    CHECK(filtered.catalog == std::vector<std::string>{"common"});
    CHECK(filtered.records.size() == 5);
  }
  SUBCASE("idempotent") {
    const DatasetIndex once = filter_by_min_samples(index, 2);
    const DatasetIndex twice = filter_by_min_samples(once, 2);
    CHECK(once.records.size() == twice.records.size());
    CHECK(once.catalog == twice.catalog);
  }
}

TEST_CASE("make_index validates records") {
  const auto ok = small_record("a", "fish", BoundingBox(1, 1, 9, 9));
  CHECK_THROWS_AS(make_index({ok, ok}), std::invalid_argument);  // dup id

  auto out_of_bounds = small_record("b", "fish", BoundingBox(1, 1, 150, 9));
  CHECK_THROWS_AS(make_index({out_of_bounds}), std::invalid_argument);

  auto unnamed = small_record("c", "", BoundingBox(1, 1, 9, 9));
  CHECK_THROWS_AS(make_index({unnamed}), std::invalid_argument);
}

TEST_CASE("manifests round-trip one id per line") {
  const auto path =
      std::filesystem::temp_directory_path() / "fishdet_manifest_test.txt";
  const std::vector<std::string> ids = {"img_3", "img_1", "img_2"};
  write_manifest(path, ids);
  CHECK(read_manifest(path) == ids);

  // newline-terminated, bit-exact layout
  std::ifstream in(path, std::ios::binary);
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  CHECK(bytes == "img_3\nimg_1\nimg_2\n");
  std::filesystem::remove(path);
}

TEST_CASE("subset_by_ids preserves manifest order and rejects unknowns") {
  const DatasetIndex index =
      make_index({small_record("a", "fish", BoundingBox(1, 1, 9, 9)),
                  small_record("b", "fish", BoundingBox(1, 1, 9, 9)),
                  small_record("c", "crab", BoundingBox(1, 1, 9, 9))});
  const DatasetIndex subset = subset_by_ids(index, {"c", "a"});
  REQUIRE(subset.records.size() == 2);
  CHECK(subset.records[0].image_id == "c");
  CHECK(subset.records[1].image_id == "a");
  CHECK(subset.catalog == std::vector<std::string>{"crab", "fish"});

  try {
    subset_by_ids(index, {"a", "nope", "missing"});
    FAIL("expected unknown-id error");
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    CHECK(what.find("nope") != std::string::npos);
    CHECK(what.find("missing") != std::string::npos);
  }
}
