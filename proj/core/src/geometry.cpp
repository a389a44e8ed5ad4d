#include "fishdet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fishdet {

BoundingBox::BoundingBox(double xmin, double ymin, double xmax, double ymax)
    : xmin_(xmin), ymin_(ymin), xmax_(xmax), ymax_(ymax) {
  if (!(std::isfinite(xmin) && std::isfinite(ymin) && std::isfinite(xmax) &&
        std::isfinite(ymax))) {
    throw std::invalid_argument("BoundingBox: coordinates must be finite");
  }
  if (!(xmin < xmax && ymin < ymax)) {
    throw std::invalid_argument(
        "BoundingBox: degenerate box, requires xmin < xmax and ymin < ymax");
  }
}

BoxDelta::BoxDelta(double dx, double dy, double dw, double dh)
    : dx(dx), dy(dy), dw(dw), dh(dh) {
  if (!(std::isfinite(dx) && std::isfinite(dy) && std::isfinite(dw) &&
        std::isfinite(dh))) {
    throw std::invalid_argument("BoxDelta: components must be finite");
  }
}

double area(const BoundingBox& b) { return b.width() * b.height(); }

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::min(a.xmax(), b.xmax()) - std::max(a.xmin(), b.xmin());
  const double iy = std::min(a.ymax(), b.ymax()) - std::max(a.ymin(), b.ymin());
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (area(a) + area(b) - inter);
}

BoxDelta encode(const BoundingBox& anchor, const BoundingBox& target) {
  return BoxDelta((target.center_x() - anchor.center_x()) / anchor.width(),
                  (target.center_y() - anchor.center_y()) / anchor.height(),
                  std::log(target.width() / anchor.width()),
                  std::log(target.height() / anchor.height()));
}

BoundingBox decode(const BoundingBox& anchor, const BoxDelta& d) {
  const double w = anchor.width() * std::exp(d.dw);
  const double h = anchor.height() * std::exp(d.dh);
  const double cx = anchor.center_x() + d.dx * anchor.width();
  const double cy = anchor.center_y() + d.dy * anchor.height();
  const double xmin = cx - 0.5 * w;
  const double xmax = cx + 0.5 * w;
  const double ymin = cy - 0.5 * h;
  const double ymax = cy + 0.5 * h;
  if (!std::isfinite(xmin) || !std::isfinite(ymin) || !std::isfinite(xmax) ||
      !std::isfinite(ymax) || !(xmin < xmax) || !(ymin < ymax)) {
    throw std::domain_error("decode: delta outside the representable range");
  }
  return BoundingBox(xmin, ymin, xmax, ymax);
}

std::optional<BoundingBox> clip(const BoundingBox& b, double width,
                                double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw std::invalid_argument("clip: frame dimensions must be positive");
  }
  const double x0 = std::clamp(b.xmin(), 0.0, width);
  const double y0 = std::clamp(b.ymin(), 0.0, height);
  const double x1 = std::clamp(b.xmax(), 0.0, width);
  const double y1 = std::clamp(b.ymax(), 0.0, height);
  if (!(x0 < x1 && y0 < y1)) return std::nullopt;
  return BoundingBox(x0, y0, x1, y1);
}

}  // namespace fishdet
