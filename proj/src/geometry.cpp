#include "labelfuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "labelfuse/error.hpp"

namespace labelfuse {

BBox::BBox(double x0, double y0, double x1, double y1)
    : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
  if (!std::isfinite(x0) || !std::isfinite(y0) || !std::isfinite(x1) || !std::isfinite(y1)) {
    throw ValidationError("box coordinates must be finite");
  }
  if (x0 > x1 || y0 > y1) {
    std::ostringstream os;
    os << "inverted box (" << x0 << ", " << y0 << ", " << x1 << ", " << y1 << ")";
    throw ValidationError(os.str());
  }
}

double area(const BBox& b) noexcept { return b.width() * b.height(); }

double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BBox& a, const BBox& b) {
  const double area_a = area(a);
  const double area_b = area(b);
  if (area_a <= 0.0 && area_b <= 0.0) {
    throw ValidationError("iou undefined for two zero-area boxes");
  }
  const double inter = intersection_area(a, b);
  const double uni = area_a + area_b - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double containment_fraction(const BBox& inner, const BBox& outer) {
  const double inner_area = area(inner);
  if (inner_area <= 0.0) {
    throw ValidationError("containment fraction undefined for a zero-area inner box");
  }
  return std::clamp(intersection_area(inner, outer) / inner_area, 0.0, 1.0);
}

BBox enclosing_box(std::span<const BBox> boxes) {
  if (boxes.empty()) throw ValidationError("enclosing box of an empty list");
  BBox out = boxes.front();
  for (const auto& b : boxes.subspan(1)) {
    out.x_min = std::min(out.x_min, b.x_min);
    out.y_min = std::min(out.y_min, b.y_min);
    out.x_max = std::max(out.x_max, b.x_max);
    out.y_max = std::max(out.y_max, b.y_max);
  }
  return out;
}

bool intersects(const BBox& a, const BBox& b) noexcept {
  return a.x_min <= b.x_max && b.x_min <= a.x_max && a.y_min <= b.y_max && b.y_min <= a.y_max;
}

}  // namespace labelfuse
