#include "fishdet/image.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace fishdet {

void write_ppm(const std::filesystem::path& path, const ImageU8& image) {
  if (image.width == 0 || image.height == 0 ||
      image.rgb.size() != image.width * image.height * 3) {
    throw std::invalid_argument("write_ppm: malformed image buffer");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("write_ppm: cannot open " + path.string());
  }
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) {
    throw std::runtime_error("write_ppm: write failed for " + path.string());
  }
}

ImageU8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("read_ppm: cannot open " + path.string());
  }
  std::string magic;
  in >> magic;
  if (magic != "P6") {
    throw std::runtime_error("read_ppm: not a binary PPM: " + path.string());
  }
  std::size_t width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (!in || width == 0 || height == 0 || maxval != 255) {
    throw std::runtime_error("read_ppm: unsupported header in " +
                             path.string());
  }
  in.get();  // single whitespace after the header
  ImageU8 image(width, height);
  in.read(reinterpret_cast<char*>(image.rgb.data()),
          static_cast<std::streamsize>(image.rgb.size()));
  if (!in) {
    throw std::runtime_error("read_ppm: truncated pixel data in " +
                             path.string());
  }
  return image;
}

Tensor image_to_tensor(const ImageU8& image) {
  Tensor t({3, image.height, image.width});
  const std::size_t plane = image.width * image.height;
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const std::uint8_t* px = image.pixel(x, y);
      const std::size_t offset = y * image.width + x;
      for (std::size_t c = 0; c < 3; ++c) {
        t[c * plane + offset] = static_cast<double>(px[c]) / 255.0 - 0.5;
      }
    }
  }
  return t;
}

}  // namespace fishdet
