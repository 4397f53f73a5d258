#pragma once

#include <utility>
#include <vector>

#include "flowplace/core/rng.hpp"
#include "flowplace/core/types.hpp"

namespace flowplace::testing {

/// Random macros with 1-3 pins each and `edges` random two-pin nets.
inline PlacementInstance random_instance(Rng& rng, int n, int edges, double min_side = 0.05,
                                         double max_side = 0.6) {
  PlacementInstance inst;
  for (int i = 0; i < n; ++i) {
    Macro m{i, uniform(rng, min_side, max_side), uniform(rng, min_side, max_side), {}};
    const int pins = uniform_int(rng, 1, 3);
    for (int k = 0; k < pins; ++k)
      m.pins.push_back({uniform(rng, -m.width / 2, m.width / 2), uniform(rng, -m.height / 2, m.height / 2)});
    inst.macros.push_back(std::move(m));
  }
  if (n >= 2) {
    for (int e = 0; e < edges; ++e) {
      const int a = uniform_int(rng, 0, n - 1);
      int b = uniform_int(rng, 0, n - 2);
      if (b >= a) ++b;
      inst.netlist.edges.push_back({a, uniform_int(rng, 0, static_cast<int>(inst.macros[a].pins.size()) - 1), b,
                                    uniform_int(rng, 0, static_cast<int>(inst.macros[b].pins.size()) - 1)});
    }
  }
  return inst;
}

inline Placement random_placement(Rng& rng, std::size_t n, double spread) {
  Placement p(n);
  for (auto& v : p.positions) v = {uniform(rng, -spread, spread), uniform(rng, -spread, spread)};
  return p;
}

/// New macro i is old macro perm[i]; edges are relabeled accordingly.
inline std::pair<PlacementInstance, Placement> permute(const PlacementInstance& inst, const Placement& p,
                                                       const std::vector<std::size_t>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  PlacementInstance out;
  out.canvas = inst.canvas;
  Placement q(p.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.macros.push_back(inst.macros[perm[i]]);
    out.macros.back().id = static_cast<int>(i);
    q[i] = p[perm[i]];
  }
  for (const auto& e : inst.netlist.edges)
    out.netlist.edges.push_back({inv[e.macro_a], e.pin_a, inv[e.macro_b], e.pin_b});
  return {out, q};
}

}  // namespace flowplace::testing
