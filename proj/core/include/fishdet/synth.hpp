#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fishdet/dataset.hpp"
#include "fishdet/image.hpp"

namespace fishdet {

/// Synthetic dataset generator: procedurally drawn "fish" archetypes on a
/// noisy water background, with ground-truth boxes tight to the painted
/// pixels. Deterministic for a given seed.
struct SynthConfig {
  std::size_t image_width = 96;
  std::size_t image_height = 96;
  std::size_t n_images = 400;
  std::size_t n_species = 3;  // between 2 and the number of styles
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  double max_overlap = 0.0;  // highest tolerated IoU between placed objects
  std::uint64_t seed = 0;
};

struct SynthDataset {
  DatasetIndex index;
  std::vector<ImageU8> images;  // aligned with index.records
};

/// Names of the available drawing styles (species labels), most distinct
/// first.
const std::vector<std::string>& synth_style_names();

SynthDataset synth_generate(const SynthConfig& config);

}  // namespace fishdet
