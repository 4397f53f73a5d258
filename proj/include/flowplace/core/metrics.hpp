#pragma once

#include <algorithm>

#include "flowplace/core/geometry.hpp"

namespace flowplace {

/// Half-perimeter wirelength. Every two-pin edge is its own net, so the
/// bounding box of a net is the box spanned by its two pin positions.
inline double hpwl(const PlacementInstance& inst, const Placement& p) {
  require_same_size(inst, p);
  double total = 0.0;
  for (const NetEdge& e : inst.netlist.edges) {
    const Vec2 a = pin_position(inst.macros[e.macro_a], p[e.macro_a], e.pin_a);
    const Vec2 b = pin_position(inst.macros[e.macro_b], p[e.macro_b], e.pin_b);
    total += std::abs(a.x - b.x) + std::abs(a.y - b.y);
  }
  return total;
}

/// HPWL rescaled from the normalized frame to the canvas' physical units.
inline double hpwl_physical(const PlacementInstance& inst, const Placement& p) {
  require_same_size(inst, p);
  const double sx = inst.canvas.width / kFrameExtent;
  const double sy = inst.canvas.height / kFrameExtent;
  double total = 0.0;
  for (const NetEdge& e : inst.netlist.edges) {
    const Vec2 a = pin_position(inst.macros[e.macro_a], p[e.macro_a], e.pin_a);
    const Vec2 b = pin_position(inst.macros[e.macro_b], p[e.macro_b], e.pin_b);
    total += sx * std::abs(a.x - b.x) + sy * std::abs(a.y - b.y);
  }
  return total;
}

/// Sum of pairwise intersection areas over all macro pairs i < j.
inline double total_overlap(const PlacementInstance& inst, const Placement& p) {
  require_same_size(inst, p);
  const std::size_t n = inst.size();
  std::vector<Rect> boxes(n);
  for (std::size_t i = 0; i < n; ++i) boxes[i] = macro_box(inst.macros[i], p[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) total += intersection_area(boxes[i], boxes[j]);
  return total;
}

/// Overlap area divided by total macro area. This is the "overlap %" we report.
inline double overlap_ratio(const PlacementInstance& inst, const Placement& p) {
  const double area = inst.total_macro_area();
  return area > 0.0 ? total_overlap(inst, p) / area : 0.0;
}

inline bool all_inside_canvas(const PlacementInstance& inst, const Placement& p) {
  require_same_size(inst, p);
  for (std::size_t i = 0; i < inst.size(); ++i)
    if (!inside_canvas(macro_box(inst.macros[i], p[i]))) return false;
  return true;
}

inline bool is_legal(const PlacementInstance& inst, const Placement& p) {
  return all_finite(p) && all_inside_canvas(inst, p) && total_overlap(inst, p) == 0.0;
}

/// Mean over macros of the box-to-boundary distance.
inline double mean_boundary_distance(const PlacementInstance& inst, const Placement& p) {
  require_same_size(inst, p);
  double s = 0.0;
  for (std::size_t i = 0; i < inst.size(); ++i)
    s += std::max(0.0, boundary_distance(macro_box(inst.macros[i], p[i])));
  return s / static_cast<double>(inst.size());
}

}  // namespace flowplace
