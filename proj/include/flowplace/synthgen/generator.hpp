#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <utility>

#include "flowplace/core/metrics.hpp"
#include "flowplace/core/rng.hpp"
#include "flowplace/synthgen/occupancy_grid.hpp"

namespace flowplace {

enum class GenMode { masked, random };

inline const char* to_string(GenMode m) { return m == GenMode::masked ? "masked" : "random"; }

struct GenConfig {
  int grid_cols = 64;
  int grid_rows = 64;
  double epsilon = 1e-6;
  int min_macros = 8;
  int max_macros = 32;
  // Raw side lengths are log-uniform in [min_side, max_side], then the whole
  // instance is rescaled so that macro area / canvas area hits a density drawn
  // uniformly from [min_density, max_density]. Sides snap to whole grid cells.
  double min_side = 0.05;
  double max_side = 0.8;
  double min_density = 0.15;
  double max_density = 0.30;
  double max_side_fraction = 0.5;  // of the canvas extent
  int min_pins = 2;
  int max_pins = 8;
  int degree_cap = 4;
  double proximity = 0.15;
  int max_attempts = 200;         // whole-instance regenerations
  int rejection_budget = 2000;    // random_layout draws per macro
  double canvas_width = 1.0;      // physical size recorded on the instance
  double canvas_height = 1.0;

  void validate() const {
    if (grid_cols < 1 || grid_rows < 1) throw ConfigError("grid resolution must be >= 1");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (!(proximity > 0.0)) throw ConfigError("proximity threshold must be > 0");
    if (min_macros < 1 || max_macros < min_macros) throw ConfigError("bad macro count range");
    if (!(min_side > 0.0) || max_side < min_side) throw ConfigError("bad macro side range");
    if (!(max_side_fraction > 0.0) || max_side_fraction > 1.0)
      throw ConfigError("max_side_fraction must be in (0, 1]");
    if (!(min_density > 0.0) || max_density < min_density || max_density >= 1.0)
      throw ConfigError("bad density range");
    if (min_pins < 1 || max_pins < min_pins) throw ConfigError("bad pin count range");
    if (degree_cap < 1) throw ConfigError("degree cap must be >= 1");
    if (max_attempts < 1 || rejection_budget < 1) throw ConfigError("retry budgets must be >= 1");
    if (!(canvas_width > 0.0) || !(canvas_height > 0.0)) throw ConfigError("canvas must be positive");
  }
};

/// A layout without pins or nets, plus its placement.
struct Layout {
  PlacementInstance instance;
  Placement placement;
};

/// S(p) = 1 / (d + eps)^2 where d is the gap from the macro box to the canvas edge.
inline double boundary_score(double distance, double epsilon) {
  const double d = std::max(0.0, distance) + epsilon;
  return 1.0 / (d * d);
}

inline double boundary_score(const Rect& box, double epsilon) {
  return boundary_score(boundary_distance(box), epsilon);
}

/// Draws an index with probability mask[i] * scores[i] / sum(mask * scores).
inline std::size_t sample_position(std::span<const std::uint8_t> mask, std::span<const double> scores,
                                   Rng& rng) {
  if (mask.size() != scores.size()) throw ContractError("mask and score sizes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) total += scores[i];
  if (!(total > 0.0)) throw GenerationError("no legal position for macro");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    acc += scores[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

namespace detail {

/// Random macro dimensions, already snapped to whole grid cells, sorted by
/// descending area.
inline std::vector<Macro> sample_macro_sizes(const GenConfig& cfg, Rng& rng) {
  const int n = uniform_int(rng, cfg.min_macros, cfg.max_macros);
  const double density = uniform(rng, cfg.min_density, cfg.max_density);
  std::vector<std::pair<double, double>> raw(static_cast<std::size_t>(n));
  double area = 0.0;
  const double la = std::log(cfg.min_side), lb = std::log(cfg.max_side);
  for (auto& [w, h] : raw) {
    w = std::exp(uniform(rng, la, lb));
    h = std::exp(uniform(rng, la, lb));
    area += w * h;
  }
  const double scale = std::sqrt(density * kFrameExtent * kFrameExtent / area);
  const double cw = kFrameExtent / cfg.grid_cols;
  const double ch = kFrameExtent / cfg.grid_rows;
  const int max_c = std::max(1, static_cast<int>(cfg.max_side_fraction * cfg.grid_cols));
  const int max_r = std::max(1, static_cast<int>(cfg.max_side_fraction * cfg.grid_rows));
  std::vector<Macro> macros(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const int kc = std::clamp(static_cast<int>(std::lround(raw[i].first * scale / cw)), 1, max_c);
    const int kr = std::clamp(static_cast<int>(std::lround(raw[i].second * scale / ch)), 1, max_r);
    macros[i].width = kc * cw;
    macros[i].height = kr * ch;
  }
  std::stable_sort(macros.begin(), macros.end(),
                   [](const Macro& a, const Macro& b) { return a.area() > b.area(); });
  for (std::size_t i = 0; i < macros.size(); ++i) macros[i].id = static_cast<int>(i);
  return macros;
}

inline PlacementInstance empty_instance(const GenConfig& cfg, std::vector<Macro> macros) {
  PlacementInstance inst;
  inst.canvas = {cfg.canvas_width, cfg.canvas_height};
  inst.macros = std::move(macros);
  return inst;
}

}  // namespace detail

/// Boundary-biased layout: macros are placed largest first, each at an anchor
/// drawn from its position mask weighted by boundary_score.
inline Layout generate_layout(const GenConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    std::vector<Macro> macros = detail::sample_macro_sizes(cfg, rng);
    OccupancyGrid grid(cfg.grid_cols, cfg.grid_rows);
    Placement placement(macros.size());
    std::vector<double> scores(static_cast<std::size_t>(cfg.grid_cols) * cfg.grid_rows);
    bool dead_end = false;
    for (std::size_t i = 0; i < macros.size() && !dead_end; ++i) {
      const PositionMask mask = position_mask(grid, macros[i]);
      if (mask.count() == 0) {
        dead_end = true;
        break;
      }
      for (int r = 0; r < grid.rows(); ++r)
        for (int c = 0; c < grid.cols(); ++c) {
          const Vec2 center = grid.center_at({c, r}, macros[i]);
          scores[static_cast<std::size_t>(r) * grid.cols() + c] =
              boundary_score(macro_box(macros[i], center), cfg.epsilon);
        }
      const std::size_t pick = sample_position(mask.legal, scores, rng);
      const Cell cell{static_cast<int>(pick % grid.cols()), static_cast<int>(pick / grid.cols())};
      grid.mark(cell, grid.footprint(macros[i]));
      placement[i] = grid.center_at(cell, macros[i]);
    }
    if (!dead_end) return {detail::empty_instance(cfg, std::move(macros)), std::move(placement)};
  }
  throw GenerationError("masked generation failed after " + std::to_string(cfg.max_attempts) +
                        " attempts");
}

/// Baseline layout: uniform rejection sampling of continuous centers.
inline Layout random_layout(const GenConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    std::vector<Macro> macros = detail::sample_macro_sizes(cfg, rng);
    Placement placement(macros.size());
    std::vector<Rect> placed;
    placed.reserve(macros.size());
    bool exhausted = false;
    for (std::size_t i = 0; i < macros.size() && !exhausted; ++i) {
      const Macro& m = macros[i];
      bool ok = false;
      for (int draw = 0; draw < cfg.rejection_budget && !ok; ++draw) {
        const Vec2 c{uniform(rng, kFrameMin + m.width / 2, kFrameMax - m.width / 2),
                     uniform(rng, kFrameMin + m.height / 2, kFrameMax - m.height / 2)};
        const Rect box = macro_box(m, c);
        ok = std::none_of(placed.begin(), placed.end(),
                          [&](const Rect& r) { return intersection_area(r, box) > 0.0; });
        if (ok) {
          placed.push_back(box);
          placement[i] = c;
        }
      }
      exhausted = !ok;
    }
    if (!exhausted) return {detail::empty_instance(cfg, std::move(macros)), std::move(placement)};
  }
  throw GenerationError("random generation exceeded its rejection budget " +
                        std::to_string(cfg.max_attempts) + " times");
}

}  // namespace flowplace
