#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flowplace/core/errors.hpp"

namespace flowplace {

// All geometry lives in the normalized frame: the canvas spans [-1, 1] x [-1, 1]
// regardless of its physical aspect. Physical sizes are only kept on Canvas so
// metrics can be reported back in design units.
inline constexpr double kFrameMin = -1.0;
inline constexpr double kFrameMax = 1.0;
inline constexpr double kFrameExtent = kFrameMax - kFrameMin;

// Slack used by overlap and containment tests. Extents at or below this are
// treated as touching.
inline constexpr double kGeomTol = 1e-9;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

struct Canvas {
  double width = 1.0;   // physical units
  double height = 1.0;  // physical units

  void validate() const {
    if (!(width > 0.0) || !(height > 0.0) || !std::isfinite(width) || !std::isfinite(height))
      throw ConfigError("canvas dimensions must be positive and finite");
  }
};

struct PinOffset {
  double dx = 0.0;
  double dy = 0.0;
  friend bool operator==(const PinOffset&, const PinOffset&) = default;
};

struct Macro {
  int id = 0;
  double width = 0.0;   // normalized units, <= kFrameExtent
  double height = 0.0;  // normalized units, <= kFrameExtent
  std::vector<PinOffset> pins;

  double area() const { return width * height; }
  friend bool operator==(const Macro&, const Macro&) = default;
};

/// Two-pin connection between pin `pin_a` of `macro_a` and pin `pin_b` of `macro_b`.
struct NetEdge {
  int macro_a = 0;
  int pin_a = 0;
  int macro_b = 0;
  int pin_b = 0;
  friend bool operator==(const NetEdge&, const NetEdge&) = default;
};

struct Netlist {
  std::vector<NetEdge> edges;
  friend bool operator==(const Netlist&, const Netlist&) = default;
};

struct PlacementInstance {
  Canvas canvas;
  std::vector<Macro> macros;
  Netlist netlist;

  std::size_t size() const { return macros.size(); }
  double total_macro_area() const {
    double a = 0.0;
    for (const auto& m : macros) a += m.area();
    return a;
  }

  /// Throws ConfigError describing the first violated invariant.
  void validate() const {
    canvas.validate();
    if (macros.empty()) throw ConfigError("instance has no macros");
    for (std::size_t i = 0; i < macros.size(); ++i) {
      const Macro& m = macros[i];
      const std::string tag = "macro " + std::to_string(i);
      if (!(m.width > 0.0) || !(m.height > 0.0))
        throw ConfigError(tag + ": width and height must be positive");
      if (m.width > kFrameExtent + kGeomTol || m.height > kFrameExtent + kGeomTol)
        throw ConfigError(tag + ": larger than the canvas");
      for (std::size_t p = 0; p < m.pins.size(); ++p) {
        const PinOffset& pin = m.pins[p];
        if (std::abs(pin.dx) > m.width / 2 + kGeomTol || std::abs(pin.dy) > m.height / 2 + kGeomTol)
          throw ConfigError(tag + " pin " + std::to_string(p) + ": offset outside the macro");
      }
    }
    for (std::size_t e = 0; e < netlist.edges.size(); ++e) {
      const NetEdge& edge = netlist.edges[e];
      const std::string tag = "edge " + std::to_string(e);
      auto check_end = [&](int macro, int pin, const char* side) {
        if (macro < 0 || static_cast<std::size_t>(macro) >= macros.size())
          throw ConfigError(tag + ": macro_" + side + " index " + std::to_string(macro) + " out of range");
        if (pin < 0 || static_cast<std::size_t>(pin) >= macros[macro].pins.size())
          throw ConfigError(tag + ": pin_" + side + " index " + std::to_string(pin) + " out of range");
      };
      check_end(edge.macro_a, edge.pin_a, "a");
      check_end(edge.macro_b, edge.pin_b, "b");
      if (edge.macro_a == edge.macro_b && edge.pin_a == edge.pin_b)
        throw ConfigError(tag + ": connects a pin to itself");
    }
  }

  friend bool operator==(const PlacementInstance& a, const PlacementInstance& b) {
    return a.canvas.width == b.canvas.width && a.canvas.height == b.canvas.height &&
           a.macros == b.macros && a.netlist == b.netlist;
  }
};

/// Macro centers in the normalized frame, one entry per macro.
struct Placement {
  std::vector<Vec2> positions;

  Placement() = default;
  explicit Placement(std::size_t n) : positions(n) {}
  explicit Placement(std::vector<Vec2> p) : positions(std::move(p)) {}

  std::size_t size() const { return positions.size(); }
  Vec2& operator[](std::size_t i) { return positions[i]; }
  const Vec2& operator[](std::size_t i) const { return positions[i]; }
  friend bool operator==(const Placement&, const Placement&) = default;
};

inline void require_same_size(const PlacementInstance& inst, const Placement& p) {
  if (inst.size() != p.size())
    throw ContractError("placement has " + std::to_string(p.size()) + " positions but instance has " +
                        std::to_string(inst.size()) + " macros");
}

inline bool all_finite(const Placement& p) {
  for (const auto& v : p.positions)
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) return false;
  return true;
}

}  // namespace flowplace
