#pragma once

#include <span>

namespace labelfuse {

/// Axis-aligned box in pixel coordinates, origin top-left, y down.
/// The box is the closed region [x_min, x_max] x [y_min, y_max]; coordinates
/// are continuous because fused boxes land between pixel centers.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  BBox() = default;
  /// Throws ValidationError on non-finite or inverted coordinates.
  BBox(double x0, double y0, double x1, double y1);

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

double area(const BBox& b) noexcept;

/// Area of the overlap region, 0 when disjoint or only touching.
double intersection_area(const BBox& a, const BBox& b) noexcept;

/// Throws ValidationError when both boxes have zero area.
double iou(const BBox& a, const BBox& b);

/// Fraction of `inner` covered by `outer`. Throws if `inner` has zero area.
double containment_fraction(const BBox& inner, const BBox& outer);

/// Smallest box covering every input. Throws on an empty list.
BBox enclosing_box(std::span<const BBox> boxes);

bool intersects(const BBox& a, const BBox& b) noexcept;

}  // namespace labelfuse
