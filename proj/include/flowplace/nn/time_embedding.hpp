#pragma once

#include <cmath>
#include <vector>

#include "flowplace/core/errors.hpp"

namespace flowplace::nn {

/// Sinusoidal encoding of t. Entry 2k is sin(t * w_k), entry 2k+1 is
/// cos(t * w_k), with w_k spaced geometrically from 1 to omega_max. Every entry
/// is omega_max-Lipschitz in t.
inline std::vector<double> time_embed(double t, int dim, double omega_max = 64.0) {
  if (dim < 2 || dim % 2 != 0) throw ContractError("time embedding width must be even and >= 2");
  if (!(t >= 0.0 && t <= 1.0)) throw ContractError("time must lie in [0, 1]");
  const int k_count = dim / 2;
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (int k = 0; k < k_count; ++k) {
    const double frac = k_count == 1 ? 0.0 : static_cast<double>(k) / (k_count - 1);
    const double w = std::pow(omega_max, frac);
    out[2 * k] = std::sin(t * w);
    out[2 * k + 1] = std::cos(t * w);
  }
  return out;
}

}  // namespace flowplace::nn
