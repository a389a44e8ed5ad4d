#pragma once

#include <optional>

namespace fishdet {

/// Axis-aligned box in continuous pixel coordinates; x grows right, y grows
/// down. Construction rejects degenerate and non-finite boxes, so every box
/// in the system has strictly positive area.
class BoundingBox {
 public:
  BoundingBox(double xmin, double ymin, double xmax, double ymax);

  double xmin() const { return xmin_; }
  double ymin() const { return ymin_; }
  double xmax() const { return xmax_; }
  double ymax() const { return ymax_; }

  double width() const { return xmax_ - xmin_; }
  double height() const { return ymax_ - ymin_; }
  double center_x() const { return 0.5 * (xmin_ + xmax_); }
  double center_y() const { return 0.5 * (ymin_ + ymax_); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double xmin_, ymin_, xmax_, ymax_;
};

/// Regression target mapping an anchor onto a target box: center offsets
/// normalized by the anchor size plus log-space width/height ratios.
struct BoxDelta {
  BoxDelta(double dx, double dy, double dw, double dh);

  double dx, dy, dw, dh;

  friend bool operator==(const BoxDelta&, const BoxDelta&) = default;
};

double area(const BoundingBox& b);

/// Intersection area over union area; 0 for disjoint boxes, 1 only for
/// coordinate-identical boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

BoxDelta encode(const BoundingBox& anchor, const BoundingBox& target);

/// Exact inverse of encode. Throws std::domain_error when the exponential
/// of the size component leaves the representable range.
BoundingBox decode(const BoundingBox& anchor, const BoxDelta& d);

/// Clamps a box to the frame [0,width]x[0,height]; nullopt when clamping
/// leaves no area.
std::optional<BoundingBox> clip(const BoundingBox& b, double width,
                                double height);

}  // namespace fishdet
