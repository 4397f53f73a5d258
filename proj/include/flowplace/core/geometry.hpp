#pragma once

#include <algorithm>

#include "flowplace/core/types.hpp"

namespace flowplace {

/// Axis-aligned box in the normalized frame.
struct Rect {
  double xlo = 0.0;
  double ylo = 0.0;
  double xhi = 0.0;
  double yhi = 0.0;

  double width() const { return xhi - xlo; }
  double height() const { return yhi - ylo; }
  double area() const { return width() * height(); }
};

inline Rect macro_box(const Macro& m, Vec2 center) {
  return {center.x - m.width / 2, center.y - m.height / 2, center.x + m.width / 2,
          center.y + m.height / 2};
}

inline Vec2 pin_position(const Macro& m, Vec2 center, int pin) {
  const PinOffset& off = m.pins[static_cast<std::size_t>(pin)];
  return {center.x + off.dx, center.y + off.dy};
}

// Closed-box intersection extent along one axis. Touching (or interpenetration
// within kGeomTol) yields zero.
inline double overlap_extent(double lo_a, double hi_a, double lo_b, double hi_b) {
  const double e = std::min(hi_a, hi_b) - std::max(lo_a, lo_b);
  return e > kGeomTol ? e : 0.0;
}

inline double intersection_area(const Rect& a, const Rect& b) {
  const double wx = overlap_extent(a.xlo, a.xhi, b.xlo, b.xhi);
  if (wx == 0.0) return 0.0;
  const double wy = overlap_extent(a.ylo, a.yhi, b.ylo, b.yhi);
  return wx * wy;
}

inline bool inside_canvas(const Rect& r) {
  return r.xlo >= kFrameMin - kGeomTol && r.ylo >= kFrameMin - kGeomTol &&
         r.xhi <= kFrameMax + kGeomTol && r.yhi <= kFrameMax + kGeomTol;
}

/// Smallest gap between the box and any canvas edge; negative when it protrudes.
inline double boundary_distance(const Rect& r) {
  return std::min({r.xlo - kFrameMin, kFrameMax - r.xhi, r.ylo - kFrameMin, kFrameMax - r.yhi});
}

/// Valid center range for a macro of the given extent so that it stays inside [-1, 1].
inline double clamp_center(double c, double extent) {
  const double lo = kFrameMin + extent / 2;
  const double hi = kFrameMax - extent / 2;
  if (lo > hi) return 0.0;
  return std::clamp(c, lo, hi);
}

}  // namespace flowplace
