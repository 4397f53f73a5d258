#pragma once

#include <random>
#include <string>
#include <string_view>

#include "flowplace/core/errors.hpp"
#include "flowplace/core/rng.hpp"
#include "flowplace/core/types.hpp"

namespace flowplace {

enum class PriorKind { standard_gaussian, truncated_gaussian, narrow_gaussian, uniform };

/// Per-coordinate i.i.d. source distribution p0.
struct SourcePrior {
  PriorKind kind = PriorKind::uniform;
  double mean = 0.0;
  double stddev = 1.0;
  double lo = -1.0;  // truncation or uniform bounds
  double hi = 1.0;

  static SourcePrior make(PriorKind k) {
    SourcePrior p;
    p.kind = k;
    if (k == PriorKind::narrow_gaussian) p.stddev = 0.5;
    return p;
  }

  void validate() const {
    if (kind != PriorKind::uniform && !(stddev > 0.0)) throw ConfigError("prior stddev must be > 0");
    if ((kind == PriorKind::uniform || kind == PriorKind::truncated_gaussian) && !(lo < hi))
      throw ConfigError("prior bounds must satisfy lo < hi");
  }

  friend bool operator==(const SourcePrior&, const SourcePrior&) = default;
};

inline const char* to_string(PriorKind k) {
  switch (k) {
    case PriorKind::standard_gaussian: return "gaussian";
    case PriorKind::truncated_gaussian: return "truncated";
    case PriorKind::narrow_gaussian: return "narrow";
    case PriorKind::uniform: return "uniform";
  }
  return "?";
}

inline PriorKind parse_prior_kind(std::string_view s) {
  if (s == "gaussian" || s == "standard_gaussian") return PriorKind::standard_gaussian;
  if (s == "truncated" || s == "truncated_gaussian") return PriorKind::truncated_gaussian;
  if (s == "narrow" || s == "narrow_gaussian") return PriorKind::narrow_gaussian;
  if (s == "uniform") return PriorKind::uniform;
  throw ConfigError("unknown prior '" + std::string(s) + "'");
}

inline double sample_coordinate(const SourcePrior& p, Rng& rng) {
  switch (p.kind) {
    case PriorKind::uniform:
      return uniform(rng, p.lo, p.hi);
    case PriorKind::truncated_gaussian: {
      std::normal_distribution<double> nd(p.mean, p.stddev);
      for (;;) {
        const double v = nd(rng);
        if (v >= p.lo && v <= p.hi) return v;
      }
    }
    default:
      return std::normal_distribution<double>(p.mean, p.stddev)(rng);
  }
}

inline Placement sample_prior(const SourcePrior& p, std::size_t n, Rng& rng) {
  p.validate();
  Placement x(n);
  for (auto& v : x.positions) {
    v.x = sample_coordinate(p, rng);
    v.y = sample_coordinate(p, rng);
  }
  return x;
}

}  // namespace flowplace
