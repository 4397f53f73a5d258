#pragma once

#include <limits>
#include <numeric>
#include <optional>

#include "flowplace/core/metrics.hpp"
#include "flowplace/synthgen/occupancy_grid.hpp"

namespace flowplace {

struct ProjectionConfig {
  int grid_cols = 64;
  int grid_rows = 64;
  double boundary_weight = 0.1;  // lambda_b
  int max_refinements = 2;       // resolution doublings before giving up

  void validate() const {
    if (grid_cols < 1 || grid_rows < 1) throw ConfigError("projection grid must be at least 1x1");
    if (!(boundary_weight >= 0.0)) throw ConfigError("boundary weight must be >= 0");
    if (max_refinements < 0) throw ConfigError("max_refinements must be >= 0");
  }
};

struct ProjectionResult {
  Placement placement;
  std::vector<Cell> cells;  // chosen anchor per macro (instance order)
  int grid_cols = 0;
  int grid_rows = 0;
  int refinements = 0;
};

/// Macro indices by descending area; ties keep instance order.
inline std::vector<std::size_t> projection_order(const PlacementInstance& inst) {
  std::vector<std::size_t> order(inst.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return inst.macros[a].area() > inst.macros[b].area();
  });
  return order;
}

/// Prediction clamped so the macro box lies inside the canvas.
inline Vec2 clamp_prediction(const Macro& m, Vec2 p) {
  return {clamp_center(p.x, m.width), clamp_center(p.y, m.height)};
}

/// ||c - target||^2 + lambda * dist(box, boundary)^2.
inline double projection_cost(const Macro& m, Vec2 center, Vec2 target, double lambda) {
  const double dx = center.x - target.x;
  const double dy = center.y - target.y;
  const double d = std::max(0.0, boundary_distance(macro_box(m, center)));
  return dx * dx + dy * dy + lambda * d * d;
}

namespace detail {

inline std::optional<ProjectionResult> project_on_grid(const PlacementInstance& inst, const Placement& x,
                                                       int cols, int rows, double lambda) {
  OccupancyGrid grid(cols, rows);
  ProjectionResult res{Placement(inst.size()), std::vector<Cell>(inst.size()), cols, rows, 0};
  for (std::size_t i : projection_order(inst)) {
    const Macro& m = inst.macros[i];
    const Footprint f = grid.footprint(m);
    // A prediction already sitting on a free anchor is kept verbatim, which
    // makes the projection idempotent on grid-aligned legal placements.
    if (auto a = grid.aligned_anchor(x[i], m); a && grid.is_free(*a, f)) {
      grid.mark(*a, f);
      res.placement[i] = x[i];
      res.cells[i] = *a;
      continue;
    }
    const Vec2 target = clamp_prediction(m, x[i]);
    double best = std::numeric_limits<double>::infinity();
    std::optional<Cell> pick;
    for (int r = 0; r + f.rows <= rows; ++r)
      for (int c = 0; c + f.cols <= cols; ++c) {
        if (!grid.is_free({c, r}, f)) continue;
        const double cost = projection_cost(m, grid.center_at({c, r}, m), target, lambda);
        if (cost < best) {
          best = cost;
          pick = Cell{c, r};
        }
      }
    if (!pick) return std::nullopt;
    grid.mark(*pick, f);
    res.placement[i] = grid.center_at(*pick, m);
    res.cells[i] = *pick;
  }
  return res;
}

}  // namespace detail

/// Greedy grid legalizer C. Macros are taken largest first; each gets the free
/// anchor of minimum projection_cost against its (clamped) prediction, ties to
/// the lowest row-major index. If some macro finds no free anchor the grid is
/// refined by doubling, up to cfg.max_refinements times.
inline ProjectionResult project(const PlacementInstance& inst, const Placement& x_tilde,
                                const ProjectionConfig& cfg = {}) {
  cfg.validate();
  require_same_size(inst, x_tilde);
  if (!all_finite(x_tilde)) throw NumericalError("projection input is not finite");
  for (const Macro& m : inst.macros)
    if (m.width > kFrameExtent + kGeomTol || m.height > kFrameExtent + kGeomTol)
      throw ConfigError("macro " + std::to_string(m.id) + " is larger than the canvas");
  if (inst.total_macro_area() > kFrameExtent * kFrameExtent + kGeomTol)
    throw ConfigError("total macro area exceeds the canvas area");
  int cols = cfg.grid_cols, rows = cfg.grid_rows;
  for (int k = 0; k <= cfg.max_refinements; ++k) {
    if (auto res = detail::project_on_grid(inst, x_tilde, cols, rows, cfg.boundary_weight)) {
      res->refinements = k;
      return std::move(*res);
    }
    cols *= 2;
    rows *= 2;
  }
  throw LegalizationError("no legal grid assignment up to " + std::to_string(cols / 2) + "x" +
                          std::to_string(rows / 2) + " cells");
}

}  // namespace flowplace
