#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fishdet/tensor.hpp"

namespace fishdet {

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct ImageU8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  ImageU8() = default;
  ImageU8(std::size_t w, std::size_t h)
      : width(w), height(h), rgb(w * h * 3, 0) {}

  std::uint8_t* pixel(std::size_t x, std::size_t y) {
    return rgb.data() + (y * width + x) * 3;
  }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const {
    return rgb.data() + (y * width + x) * 3;
  }
};

/// Binary PPM (P6, maxval 255) — lossless and dependency-free.
void write_ppm(const std::filesystem::path& path, const ImageU8& image);
ImageU8 read_ppm(const std::filesystem::path& path);

/// [3,H,W] tensor with values mapped to [-0.5, 0.5].
Tensor image_to_tensor(const ImageU8& image);

}  // namespace fishdet
