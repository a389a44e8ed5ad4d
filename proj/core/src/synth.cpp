#include "fishdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fishdet/random.hpp"

namespace fishdet {
namespace {

struct Rgb {
  double r, g, b;
};

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

struct Placement {
  std::size_t style;
  double cx, cy;    // center, pixels
  double ax, ay;    // semi-axes, pixels
  double wobble;    // per-object texture phase
  Rgb tint;
};

// Body colors per style; shapes and textures differ too so the styles stay
// separable under noise.
constexpr Rgb kBodyColor[4] = {
    {205.0, 90.0, 60.0},    // roundfin: warm red, near-circular
    {70.0, 185.0, 80.0},    // stripetail: green, elongated, dark stripes
    {70.0, 95.0, 215.0},    // spotback: blue, upright, light spots
    {215.0, 190.0, 70.0},   // fanfin: sandy diamond
};

bool inside_body(const Placement& p, double px, double py) {
  const double nx = (px - p.cx) / p.ax;
  const double ny = (py - p.cy) / p.ay;
  if (p.style == 3) return std::abs(nx) + std::abs(ny) <= 1.0;  // diamond
  return nx * nx + ny * ny <= 1.0;
}

Rgb body_pixel(const Placement& p, double px, double py, Rng& noise) {
  const double nx = (px - p.cx) / p.ax;
  const double ny = (py - p.cy) / p.ay;
  const double d2 = p.style == 3 ? std::abs(nx) + std::abs(ny)
                                 : nx * nx + ny * ny;
  const double shade = 1.0 - 0.35 * d2;  // darker toward the rim

  Rgb c = p.tint;
  switch (p.style) {
    case 1: {  // vertical dark stripes
      const auto band = static_cast<long long>(
          std::floor((px - p.cx) / 4.0 + p.wobble));
      if (band % 2 == 0) {
        c.r *= 0.45;
        c.g *= 0.45;
        c.b *= 0.45;
      }
      break;
    }
    case 2: {  // light spots on a grid
      const double sx = std::fmod(std::abs(px - p.cx + p.wobble * 7.0), 6.0);
      const double sy = std::fmod(std::abs(py - p.cy + p.wobble * 3.0), 6.0);
      if ((sx - 3.0) * (sx - 3.0) + (sy - 3.0) * (sy - 3.0) < 2.5) {
        c.r = std::min(255.0, c.r + 90.0);
        c.g = std::min(255.0, c.g + 90.0);
        c.b = std::min(255.0, c.b + 90.0);
      }
      break;
    }
    default:
      break;
  }
  const double n = noise.gaussian(0.0, 6.0);
  return {c.r * shade + n, c.g * shade + n, c.b * shade + n};
}

}  // namespace

const std::vector<std::string>& synth_style_names() {
  static const std::vector<std::string> names = {
      "roundfin", "stripetail", "spotback", "fanfin"};
  return names;
}

SynthDataset synth_generate(const SynthConfig& config) {
  const auto& styles = synth_style_names();
  if (config.n_species < 2 || config.n_species > styles.size()) {
    throw std::invalid_argument("synth_generate: n_species must be in [2, " +
                                std::to_string(styles.size()) + "]");
  }
  if (config.image_width < 32 || config.image_height < 32) {
    throw std::invalid_argument("synth_generate: images must be >= 32x32");
  }
  if (config.max_objects < 1 || config.min_objects > config.max_objects) {
    throw std::invalid_argument("synth_generate: bad objects-per-image range");
  }
  if (!(config.max_overlap >= 0.0 && config.max_overlap < 1.0)) {
    throw std::invalid_argument("synth_generate: max_overlap must be in [0,1)");
  }

  const double w = static_cast<double>(config.image_width);
  const double h = static_cast<double>(config.image_height);
  const double base = std::min(w, h);

  std::vector<AnnotationRecord> records;
  std::vector<ImageU8> images;
  records.reserve(config.n_images);
  images.reserve(config.n_images);

  for (std::size_t img_idx = 0; img_idx < config.n_images; ++img_idx) {
    Rng rng(mix_seed(config.seed, img_idx));

    ImageU8 image(config.image_width, config.image_height);
    // murky water background: vertical gradient plus noise
    for (std::size_t y = 0; y < config.image_height; ++y) {
      const double depth = static_cast<double>(y) / h;
      for (std::size_t x = 0; x < config.image_width; ++x) {
        const double n = rng.gaussian(0.0, 10.0);
        std::uint8_t* px = image.pixel(x, y);
        px[0] = to_byte(38.0 + 10.0 * depth + n);
        px[1] = to_byte(70.0 + 16.0 * depth + n);
        px[2] = to_byte(105.0 + 28.0 * depth + n);
      }
    }

    const std::size_t n_objects =
        config.min_objects +
        rng.below(config.max_objects - config.min_objects + 1);

    AnnotationRecord record;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%06zu", img_idx);
    record.image_id = id;
    record.width = config.image_width;
    record.height = config.image_height;

    std::vector<BoundingBox> placed;
    for (std::size_t obj = 0; obj < n_objects; ++obj) {
      bool drawn = false;
      for (std::size_t attempt = 0; attempt < 200 && !drawn; ++attempt) {
        Placement p;
        p.style = rng.below(config.n_species);
        const double r = rng.uniform(base * 0.08, base * 0.15);
        switch (p.style) {
          case 1:  p.ax = r * 1.5; p.ay = r * 0.75; break;  // elongated
          case 2:  p.ax = r * 0.75; p.ay = r * 1.4; break;  // upright
          default: p.ax = r;        p.ay = r * 0.9;  break;
        }
        const double margin = 2.0;
        if (2.0 * p.ax + 2.0 * margin >= w || 2.0 * p.ay + 2.0 * margin >= h) {
          continue;
        }
        p.cx = rng.uniform(p.ax + margin, w - p.ax - margin);
        p.cy = rng.uniform(p.ay + margin, h - p.ay - margin);
        p.wobble = rng.uniform(0.0, 4.0);
        p.tint = kBodyColor[p.style];
        p.tint.r += rng.uniform(-18.0, 18.0);
        p.tint.g += rng.uniform(-18.0, 18.0);
        p.tint.b += rng.uniform(-18.0, 18.0);

        const BoundingBox rough(p.cx - p.ax, p.cy - p.ay, p.cx + p.ax,
                                p.cy + p.ay);
        bool clashes = false;
        for (const BoundingBox& other : placed) {
          if (iou(rough, other) > config.max_overlap) {
            clashes = true;
            break;
          }
        }
        if (clashes) continue;

        // paint and record the tight pixel extent
        const auto x_lo = static_cast<std::size_t>(std::max(0.0, p.cx - p.ax));
        const auto x_hi = static_cast<std::size_t>(
            std::min(w - 1.0, std::ceil(p.cx + p.ax)));
        const auto y_lo = static_cast<std::size_t>(std::max(0.0, p.cy - p.ay));
        const auto y_hi = static_cast<std::size_t>(
            std::min(h - 1.0, std::ceil(p.cy + p.ay)));
        std::size_t min_x = config.image_width, max_x = 0;
        std::size_t min_y = config.image_height, max_y = 0;
        for (std::size_t y = y_lo; y <= y_hi; ++y) {
          for (std::size_t x = x_lo; x <= x_hi; ++x) {
            const double px_center = static_cast<double>(x) + 0.5;
            const double py_center = static_cast<double>(y) + 0.5;
            if (!inside_body(p, px_center, py_center)) continue;
            const Rgb c = body_pixel(p, px_center, py_center, rng);
            std::uint8_t* px = image.pixel(x, y);
            px[0] = to_byte(c.r);
            px[1] = to_byte(c.g);
            px[2] = to_byte(c.b);
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
          }
        }
        if (min_x > max_x || min_y > max_y) continue;  // nothing painted

        const BoundingBox tight(static_cast<double>(min_x),
                                static_cast<double>(min_y),
                                static_cast<double>(max_x + 1),
                                static_cast<double>(max_y + 1));
        record.objects.push_back({styles[p.style], tight});
        placed.push_back(tight);
        drawn = true;
      }
      if (!drawn) {
        throw std::runtime_error(
            "synth_generate: could not place an object; relax max_overlap or "
            "enlarge the image");
      }
    }

    records.push_back(std::move(record));
    images.push_back(std::move(image));
  }

  SynthDataset dataset;
  dataset.index = make_index(std::move(records));
  dataset.images = std::move(images);
  return dataset;
}

}  // namespace fishdet
