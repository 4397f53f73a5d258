#pragma once

#include <algorithm>
#include <cmath>
#include <tuple>
#include <unordered_map>

#include "flowplace/synthgen/generator.hpp"

namespace flowplace {

namespace detail {

struct PinRef {
  int macro;
  int pin;
  Vec2 pos;
};

struct CandidatePair {
  double dist2;
  std::size_t a;  // global pin index, a < b
  std::size_t b;
};

inline std::vector<PinRef> flatten_pins(const std::vector<Macro>& macros, const Placement& p) {
  std::vector<PinRef> pins;
  for (std::size_t m = 0; m < macros.size(); ++m)
    for (std::size_t k = 0; k < macros[m].pins.size(); ++k)
      pins.push_back({static_cast<int>(m), static_cast<int>(k),
                      pin_position(macros[m], p[m], static_cast<int>(k))});
  return pins;
}

/// Greedy nearest-first selection honoring the per-pin degree cap.
inline Netlist select_edges(std::vector<CandidatePair> cands, const std::vector<PinRef>& pins,
                            int degree_cap) {
  std::sort(cands.begin(), cands.end(), [](const CandidatePair& x, const CandidatePair& y) {
    return std::tie(x.dist2, x.a, x.b) < std::tie(y.dist2, y.a, y.b);
  });
  std::vector<int> degree(pins.size(), 0);
  Netlist net;
  for (const auto& c : cands) {
    if (degree[c.a] >= degree_cap || degree[c.b] >= degree_cap) continue;
    ++degree[c.a];
    ++degree[c.b];
    net.edges.push_back({pins[c.a].macro, pins[c.a].pin, pins[c.b].macro, pins[c.b].pin});
  }
  return net;
}

}  // namespace detail

/// Samples pins on every macro (writing them into `macros`).
inline void assign_pins(std::vector<Macro>& macros, const GenConfig& cfg, Rng& rng) {
  for (Macro& m : macros) {
    const int k = uniform_int(rng, cfg.min_pins, cfg.max_pins);
    m.pins.resize(static_cast<std::size_t>(k));
    for (PinOffset& pin : m.pins) {
      pin.dx = uniform(rng, -m.width / 2, m.width / 2);
      pin.dy = uniform(rng, -m.height / 2, m.height / 2);
    }
  }
}

/// Connects pins on distinct macros that lie closer than `cfg.proximity`,
/// nearest pairs first, with at most `cfg.degree_cap` edges per pin. Candidate
/// pairs come from a uniform spatial hash with bucket size = proximity.
inline Netlist connect_proximate_pins(const std::vector<Macro>& macros, const Placement& placement,
                                      const GenConfig& cfg) {
  if (macros.size() != placement.size()) throw ContractError("macro/placement size mismatch");
  const auto pins = detail::flatten_pins(macros, placement);
  const double cell = cfg.proximity;
  const double limit2 = cfg.proximity * cfg.proximity;
  auto key = [](long long cx, long long cy) { return (cx << 32) ^ (cy & 0xffffffffLL); };
  auto bucket_of = [&](Vec2 p) {
    return std::pair<long long, long long>{static_cast<long long>(std::floor(p.x / cell)),
                                           static_cast<long long>(std::floor(p.y / cell))};
  };
  std::unordered_map<long long, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < pins.size(); ++i) {
    auto [cx, cy] = bucket_of(pins[i].pos);
    buckets[key(cx, cy)].push_back(i);
  }
  std::vector<detail::CandidatePair> cands;
  for (std::size_t i = 0; i < pins.size(); ++i) {
    auto [cx, cy] = bucket_of(pins[i].pos);
    for (long long dy = -1; dy <= 1; ++dy)
      for (long long dx = -1; dx <= 1; ++dx) {
        auto it = buckets.find(key(cx + dx, cy + dy));
        if (it == buckets.end()) continue;
        for (std::size_t j : it->second) {
          if (j <= i || pins[j].macro == pins[i].macro) continue;
          const double ex = pins[i].pos.x - pins[j].pos.x;
          const double ey = pins[i].pos.y - pins[j].pos.y;
          const double d2 = ex * ex + ey * ey;
          if (d2 < limit2) cands.push_back({d2, i, j});
        }
      }
  }
  return detail::select_edges(std::move(cands), pins, cfg.degree_cap);
}

/// Pins plus proximity nets derived from a finished layout. The layout is, by
/// construction, a good placement for the netlist it induces.
inline Netlist build_netlist(const Placement& placement, std::vector<Macro>& macros,
                             const GenConfig& cfg, Rng& rng) {
  assign_pins(macros, cfg, rng);
  return connect_proximate_pins(macros, placement, cfg);
}

/// A complete synthetic training sample: instance with netlist and its
/// reference placement.
struct Sample {
  PlacementInstance instance;
  Placement placement;
};

inline Sample generate_sample(const GenConfig& cfg, GenMode mode, Rng& rng) {
  Layout layout = mode == GenMode::masked ? generate_layout(cfg, rng) : random_layout(cfg, rng);
  layout.instance.netlist = build_netlist(layout.placement, layout.instance.macros, cfg, rng);
  return {std::move(layout.instance), std::move(layout.placement)};
}

inline Sample generate_sample(const GenConfig& cfg, GenMode mode, std::uint64_t seed) {
  Rng rng(seed);
  return generate_sample(cfg, mode, rng);
}

}  // namespace flowplace
