#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "flowplace/core/geometry.hpp"

namespace flowplace {

/// Grid cell index (column, row). Anchors are cell lower-left corners.
struct Cell {
  int col = 0;
  int row = 0;
  friend bool operator==(Cell, Cell) = default;
};

/// Number of grid cells a macro covers along each axis.
struct Footprint {
  int cols = 1;
  int rows = 1;
};

/// Binary mask over grid anchors, row-major (index = row * cols + col).
struct PositionMask {
  int cols = 0;
  int rows = 0;
  std::vector<std::uint8_t> legal;

  bool at(Cell c) const { return legal[static_cast<std::size_t>(c.row) * cols + c.col] != 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : legal) n += b;
    return n;
  }
};

/// Uniform discretization of the normalized canvas with per-cell occupancy.
///
/// A placed macro marks every cell its box touches, so a free anchor is always
/// overlap-free even when macro sizes are not cell multiples. Free-region
/// queries use a summed-area table rebuilt lazily after marking.
class OccupancyGrid {
 public:
  OccupancyGrid(int cols, int rows) : cols_(cols), rows_(rows) {
    if (cols < 1 || rows < 1) throw ConfigError("grid resolution must be at least 1x1");
    cells_.assign(static_cast<std::size_t>(cols) * rows, 0);
  }

  int cols() const { return cols_; }
  int rows() const { return rows_; }
  double cell_width() const { return kFrameExtent / cols_; }
  double cell_height() const { return kFrameExtent / rows_; }

  bool occupied(Cell c) const { return cells_[index(c)] != 0; }
  std::size_t occupied_count() const {
    std::size_t n = 0;
    for (auto b : cells_) n += b;
    return n;
  }

  Footprint footprint(const Macro& m) const {
    return {cells_for(m.width, cell_width()), cells_for(m.height, cell_height())};
  }

  /// Footprint fits inside the grid at this anchor.
  bool fits(Cell a, Footprint f) const {
    return a.col >= 0 && a.row >= 0 && a.col + f.cols <= cols_ && a.row + f.rows <= rows_;
  }

  /// Fits and covers no occupied cell.
  bool is_free(Cell a, Footprint f) const {
    if (!fits(a, f)) return false;
    refresh();
    return region_sum(a.col, a.row, a.col + f.cols, a.row + f.rows) == 0;
  }

  void mark(Cell a, Footprint f) {
    if (!fits(a, f)) throw ContractError("marking a footprint outside the grid");
    for (int r = a.row; r < a.row + f.rows; ++r)
      for (int c = a.col; c < a.col + f.cols; ++c) cells_[index({c, r})] = 1;
    dirty_ = true;
  }

  void mark_cell(Cell c) {
    cells_[index(c)] = 1;
    dirty_ = true;
  }

  void clear() {
    std::fill(cells_.begin(), cells_.end(), 0);
    dirty_ = true;
  }

  Vec2 anchor_corner(Cell a) const {
    return {kFrameMin + a.col * cell_width(), kFrameMin + a.row * cell_height()};
  }

  Vec2 center_at(Cell a, const Macro& m) const {
    const Vec2 ll = anchor_corner(a);
    return {ll.x + m.width / 2, ll.y + m.height / 2};
  }

  /// The anchor whose lower-left corner coincides (within kGeomTol) with the
  /// macro's lower-left corner, if any.
  std::optional<Cell> aligned_anchor(Vec2 center, const Macro& m) const {
    const double fx = (center.x - m.width / 2 - kFrameMin) / cell_width();
    const double fy = (center.y - m.height / 2 - kFrameMin) / cell_height();
    const double rx = std::round(fx);
    const double ry = std::round(fy);
    if (std::abs(fx - rx) * cell_width() > kGeomTol || std::abs(fy - ry) * cell_height() > kGeomTol)
      return std::nullopt;
    return Cell{static_cast<int>(rx), static_cast<int>(ry)};
  }

  static int cells_for(double extent, double cell) {
    return std::max(1, static_cast<int>(std::ceil(extent / cell - 1e-9)));
  }

 private:
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * cols_ + c.col; }

  void refresh() const {
    if (!dirty_) return;
    const int w = cols_ + 1;
    prefix_.assign(static_cast<std::size_t>(w) * (rows_ + 1), 0);
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c)
        prefix_[(r + 1) * w + (c + 1)] = cells_[index({c, r})] + prefix_[r * w + (c + 1)] +
                                         prefix_[(r + 1) * w + c] - prefix_[r * w + c];
    dirty_ = false;
  }

  int region_sum(int c0, int r0, int c1, int r1) const {
    const int w = cols_ + 1;
    return prefix_[r1 * w + c1] - prefix_[r0 * w + c1] - prefix_[r1 * w + c0] + prefix_[r0 * w + c0];
  }

  int cols_;
  int rows_;
  std::vector<std::uint8_t> cells_;
  mutable std::vector<int> prefix_;
  mutable bool dirty_ = true;
};

/// Legal anchors for `m`: inside the canvas and covering no occupied cell.
inline PositionMask position_mask(const OccupancyGrid& grid, const Macro& m) {
  if (m.width > kFrameExtent + kGeomTol || m.height > kFrameExtent + kGeomTol)
    throw ConfigError("macro " + std::to_string(m.id) + " is larger than the canvas");
  const Footprint f = grid.footprint(m);
  PositionMask mask{grid.cols(), grid.rows(), {}};
  mask.legal.assign(static_cast<std::size_t>(grid.cols()) * grid.rows(), 0);
  for (int r = 0; r < grid.rows(); ++r)
    for (int c = 0; c < grid.cols(); ++c)
      mask.legal[static_cast<std::size_t>(r) * grid.cols() + c] = grid.is_free({c, r}, f) ? 1 : 0;
  return mask;
}

}  // namespace flowplace
