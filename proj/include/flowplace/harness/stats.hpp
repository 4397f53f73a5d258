#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "flowplace/core/errors.hpp"

namespace flowplace {

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
};

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  s.n = xs.size();
  if (s.n == 0) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    for (double x : xs) s.variance += (x - s.mean) * (x - s.mean);
    s.variance /= static_cast<double>(s.n - 1);
  }
  return s;
}

struct TestResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;  // one-sided
};

namespace detail {

inline double upper_tail(double t, double dof) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  boost::math::students_t dist(dof);
  return boost::math::cdf(boost::math::complement(dist, t));
}

}  // namespace detail

/// One-sided paired t-test of H1: mean(a - b) < 0.
inline TestResult paired_t_less(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("paired test needs two equal samples of size >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const Summary s = summarize(d);
  TestResult r;
  r.dof = static_cast<double>(s.n - 1);
  const double se = std::sqrt(s.variance / static_cast<double>(s.n));
  if (se == 0.0) {
    r.statistic = s.mean < 0 ? -std::numeric_limits<double>::infinity()
                             : (s.mean > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    r.p_value = s.mean < 0 ? 0.0 : 1.0;
    return r;
  }
  r.statistic = s.mean / se;
  r.p_value = detail::upper_tail(-r.statistic, r.dof);
  return r;
}

/// One-sided Welch t-test of H1: mean(a) < mean(b).
inline TestResult welch_t_less(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ContractError("Welch test needs samples of size >= 2");
  const Summary sa = summarize(a), sb = summarize(b);
  const double va = sa.variance / static_cast<double>(sa.n);
  const double vb = sb.variance / static_cast<double>(sb.n);
  TestResult r;
  r.statistic = (sa.mean - sb.mean) / std::sqrt(va + vb);
  r.dof = (va + vb) * (va + vb) /
          (va * va / static_cast<double>(sa.n - 1) + vb * vb / static_cast<double>(sb.n - 1));
  r.p_value = detail::upper_tail(-r.statistic, r.dof);
  return r;
}

}  // namespace flowplace
