#pragma once

#include <concepts>
#include <string>

#include "flowplace/nn/velocity_model.hpp"
#include "flowplace/sampler/prior.hpp"
#include "flowplace/sampler/projection.hpp"

namespace flowplace {

/// Anything usable as v(x_t, t).
template <class F>
concept VelocityField = std::invocable<F&, const Placement&, double> &&
                        std::convertible_to<std::invoke_result_t<F&, const Placement&, double>, Placement>;

enum class SampleMode { free, hard };

inline const char* to_string(SampleMode m) { return m == SampleMode::free ? "free" : "hard"; }

inline SampleMode parse_sample_mode(std::string_view s) {
  if (s == "free") return SampleMode::free;
  if (s == "hard" || s == "hard_constraint") return SampleMode::hard;
  throw ConfigError("unknown sampling mode '" + std::string(s) + "'");
}

struct SamplerConfig {
  SourcePrior prior;
  int steps = 50;
  SampleMode mode = SampleMode::hard;
  ProjectionConfig projection;
  int project_every = 1;  // hard mode: project on steps k with k % project_every == 0, and always on the last
  std::uint64_t seed = 0;

  void validate() const {
    prior.validate();
    projection.validate();
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (project_every < 1) throw ConfigError("project_every must be >= 1");
  }
};

struct TrajectoryState {
  Placement x0;  // retained initial draw
  Placement xt;
  double t = 0.0;
};

inline Placement axpy(const Placement& x, double a, const Placement& v) {
  if (x.size() != v.size()) throw ContractError("placement sizes differ");
  Placement out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = {x[i].x + a * v[i].x, x[i].y + a * v[i].y};
  return out;
}

/// (1 - s) a + s b.
inline Placement lerp(const Placement& a, const Placement& b, double s) {
  if (a.size() != b.size()) throw ContractError("placement sizes differ");
  Placement out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = {(1 - s) * a[i].x + s * b[i].x, (1 - s) * a[i].y + s * b[i].y};
  return out;
}

/// x~1 = x_t + (1 - t) v. At t == 1 this is x_t.
inline Placement extrapolate(const TrajectoryState& s, const Placement& v) {
  if (s.t >= 1.0) return s.xt;
  return axpy(s.xt, 1.0 - s.t, v);
}

/// v^ = (x^1 - x_t) / (1 - t).
inline Placement corrected_velocity(const TrajectoryState& s, const Placement& x_hat) {
  if (s.t >= 1.0) throw ContractError("corrected velocity is undefined at t = 1");
  Placement out(x_hat.size());
  for (std::size_t i = 0; i < x_hat.size(); ++i)
    out[i] = {(x_hat[i].x - s.xt[i].x) / (1 - s.t), (x_hat[i].y - s.xt[i].y) / (1 - s.t)};
  return out;
}

struct StepOutput {
  TrajectoryState next;
  Placement x_tilde;
  Placement x_hat;
};

/// One hard-constraint step: extrapolate, project, then re-interpolate between
/// x0 and the projected endpoint at t_next.
inline StepOutput constrained_step(const TrajectoryState& s, const Placement& v, const PlacementInstance& inst,
                                   const ProjectionConfig& pcfg, double t_next) {
  if (!(t_next > s.t && t_next <= 1.0)) throw ContractError("t_next must lie in (t, 1]");
  StepOutput out;
  out.x_tilde = extrapolate(s, v);
  out.x_hat = project(inst, out.x_tilde, pcfg).placement;
  out.next.x0 = s.x0;
  out.next.t = t_next;
  out.next.xt = t_next == 1.0 ? out.x_hat : lerp(s.x0, out.x_hat, t_next);
  return out;
}

struct SampleResult {
  Placement placement;
  Placement x0;
  std::vector<Placement> trace;  // x at t = 0, 1/N, ..., 1 when requested
};

namespace detail {

inline void require_finite(const Placement& x, int step) {
  if (!all_finite(x)) throw NumericalError("non-finite state at step " + std::to_string(step));
}

inline double step_time(int k, int n) { return static_cast<double>(k) / n; }

}  // namespace detail

/// Plain Euler integration x <- x + dt v(x, t) from x0 over `steps` uniform steps.
template <VelocityField F>
Placement euler_sample(F&& field, Placement x0, int steps, std::vector<Placement>* trace = nullptr) {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  const double dt = 1.0 / steps;
  if (trace) trace->push_back(x0);
  Placement x = std::move(x0);
  for (int k = 0; k < steps; ++k) {
    const Placement v = field(x, detail::step_time(k, steps));
    x = axpy(x, dt, v);
    detail::require_finite(x, k);
    if (trace) trace->push_back(x);
  }
  return x;
}

/// Hard-constraint sampling from a given x0. The final state is the last
/// projection output and therefore legal.
template <VelocityField F>
Placement constrained_sample(F&& field, const PlacementInstance& inst, Placement x0, const SamplerConfig& cfg,
                             std::vector<Placement>* trace = nullptr) {
  cfg.validate();
  require_same_size(inst, x0);
  TrajectoryState s{x0, x0, 0.0};
  if (trace) trace->push_back(s.xt);
  const double dt = 1.0 / cfg.steps;
  for (int k = 0; k < cfg.steps; ++k) {
    const Placement v = field(s.xt, s.t);
    const bool last = k + 1 == cfg.steps;
    const double t_next = last ? 1.0 : detail::step_time(k + 1, cfg.steps);
    if (last || k % cfg.project_every == 0) {
      try {
        s = constrained_step(s, v, inst, cfg.projection, t_next).next;
      } catch (const LegalizationError& e) {
        throw LegalizationError(std::string(e.what()) + " (step " + std::to_string(k) + ", t = " +
                                std::to_string(s.t) + ")");
      }
    } else {
      s.xt = axpy(s.xt, dt, v);
      s.t = t_next;
    }
    detail::require_finite(s.xt, k);
    if (trace) trace->push_back(s.xt);
  }
  return s.xt;
}

/// Draws x0 from the configured prior (seeded by cfg.seed) and integrates in
/// the configured mode.
template <VelocityField F>
SampleResult sample(F&& field, const PlacementInstance& inst, const SamplerConfig& cfg, bool keep_trace = false) {
  cfg.validate();
  Rng rng(cfg.seed);
  SampleResult r;
  r.x0 = sample_prior(cfg.prior, inst.size(), rng);
  auto* tr = keep_trace ? &r.trace : nullptr;
  r.placement = cfg.mode == SampleMode::free ? euler_sample(field, r.x0, cfg.steps, tr)
                                             : constrained_sample(field, inst, r.x0, cfg, tr);
  return r;
}

/// Adapts a model and a prepared graph to the VelocityField interface.
template <class T>
auto model_field(const nn::VelocityModel<T>& model, const nn::GraphInput<T>& graph) {
  return [&model, &graph](const Placement& x, double t) { return model.velocity(graph, x, t); };
}

/// The zero field.
inline Placement zero_field(const Placement& x, double) { return Placement(x.size()); }

}  // namespace flowplace
