#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowplace/harness/stats.hpp"
#include "flowplace/sampler/sampler.hpp"
#include "flowplace/synthgen/netlist_builder.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fp = flowplace;

namespace {

fp::PlacementInstance desk_instance(std::uint64_t seed) {
  return fp::generate_sample(fp::GenConfig{}, fp::GenMode::masked, seed).instance;
}

}  // namespace

TEST(Prior, SupportAndMoments) {
  fp::Rng rng(1);
  const auto u = fp::sample_prior(fp::SourcePrior::make(fp::PriorKind::uniform), 5000, rng);
  const auto tg = fp::sample_prior(fp::SourcePrior::make(fp::PriorKind::truncated_gaussian), 5000, rng);
  std::vector<double> tv;
  for (const auto& v : u.positions) {
    ASSERT_GE(std::min(v.x, v.y), -1.0);
    ASSERT_LE(std::max(v.x, v.y), 1.0);
  }
  for (const auto& v : tg.positions) {
    ASSERT_GE(std::min(v.x, v.y), -1.0);
    ASSERT_LE(std::max(v.x, v.y), 1.0);
    tv.push_back(v.x);
    tv.push_back(v.y);
  }
  EXPECT_LT(std::sqrt(fp::summarize(tv).variance), 1.0);
}

TEST(Prior, StandardGaussianMoments) {
  fp::Rng rng(2);
  const auto g = fp::sample_prior(fp::SourcePrior::make(fp::PriorKind::standard_gaussian), 50000, rng);
  std::vector<double> xs;
  for (const auto& v : g.positions) {
    xs.push_back(v.x);
    xs.push_back(v.y);
  }
  ASSERT_EQ(xs.size(), 100000u);
  const auto s = fp::summarize(xs);
  EXPECT_NEAR(s.mean, 0.0, 0.02);
  EXPECT_GE(std::sqrt(s.variance), 0.98);
  EXPECT_LE(std::sqrt(s.variance), 1.02);
}

TEST(Prior, NarrowGaussianUsesHalfStd) {
  fp::Rng rng(3);
  const auto g = fp::sample_prior(fp::SourcePrior::make(fp::PriorKind::narrow_gaussian), 50000, rng);
  std::vector<double> xs;
  for (const auto& v : g.positions) xs.push_back(v.x);
  EXPECT_NEAR(std::sqrt(fp::summarize(xs).variance), 0.5, 0.01);
  EXPECT_EQ(fp::parse_prior_kind("narrow"), fp::PriorKind::narrow_gaussian);
  EXPECT_THROW(fp::parse_prior_kind("cauchy"), fp::ConfigError);
}

TEST(Euler, ConstantFieldIsExactForAnyStepCount) {
  fp::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x0 = fp::testing::random_placement(rng, 12, 1.0);
    const auto x1 = fp::testing::random_placement(rng, 12, 1.0);
    fp::Placement v(12);
    for (int i = 0; i < 12; ++i) v[i] = x1[i] - x0[i];
    auto field = [&](const fp::Placement&, double) { return v; };
    for (int n : {1, 5, 50}) {
      const auto out = fp::euler_sample(field, x0, n);
      for (int i = 0; i < 12; ++i) {
        ASSERT_NEAR(out[i].x, x1[i].x, 1e-10);
        ASSERT_NEAR(out[i].y, x1[i].y, 1e-10);
      }
    }
  }
}

TEST(Euler, SingleStepAndTrace) {
  const fp::Placement x0(std::vector<fp::Vec2>{{0.1, 0.2}, {-0.3, 0.4}});
  std::vector<double> seen_t;
  auto field = [&](const fp::Placement& x, double t) {
    seen_t.push_back(t);
    fp::Placement v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = {2 * x[i].x + 1, -x[i].y};
    return v;
  };
  const auto out = fp::euler_sample(field, x0, 1);
  EXPECT_DOUBLE_EQ(out[0].x, 0.1 + (2 * 0.1 + 1));
  EXPECT_DOUBLE_EQ(out[1].y, 0.4 - 0.4);
  ASSERT_EQ(seen_t, std::vector<double>{0.0});
  std::vector<fp::Placement> trace;
  fp::euler_sample(field, x0, 7, &trace);
  EXPECT_EQ(trace.size(), 8u);
}

TEST(Euler, NonFiniteStateReportsStep) {
  auto field = [](const fp::Placement& x, double t) {
    fp::Placement v(x.size());
    if (t > 0.3) v[0].x = std::numeric_limits<double>::infinity();
    return v;
  };
  try {
    fp::euler_sample(field, fp::Placement(2), 10);
    FAIL();
  } catch (const fp::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step 4"), std::string::npos) << e.what();
  }
}

TEST(Extrapolate, Formula) {
  fp::TrajectoryState s{fp::Placement(1), fp::Placement(std::vector<fp::Vec2>{{0.5, 0.5}}), 0.5};
  const auto x = fp::extrapolate(s, fp::Placement(std::vector<fp::Vec2>{{1.0, 1.0}}));
  EXPECT_DOUBLE_EQ(x[0].x, 1.0);
  s.t = 0.0;
  EXPECT_DOUBLE_EQ(fp::extrapolate(s, fp::Placement(std::vector<fp::Vec2>{{0.25, 0.0}}))[0].x, 0.75);
  s.t = 1.0;
  EXPECT_EQ(fp::extrapolate(s, fp::Placement(std::vector<fp::Vec2>{{9.0, 9.0}})), s.xt);
}

TEST(Extrapolate, RecoversEndpointAlongLinearPath) {
  fp::Rng rng(5);
  for (int k = 0; k < 10000; ++k) {
    const fp::Vec2 x0{fp::uniform(rng, -2, 2), fp::uniform(rng, -2, 2)};
    const fp::Vec2 x1{fp::uniform(rng, -1, 1), fp::uniform(rng, -1, 1)};
    const double t = fp::uniform01(rng);
    fp::TrajectoryState s{fp::Placement(std::vector<fp::Vec2>{x0}),
                          fp::Placement(std::vector<fp::Vec2>{{(1 - t) * x0.x + t * x1.x, (1 - t) * x0.y + t * x1.y}}),
                          t};
    const auto r = fp::extrapolate(s, fp::Placement(std::vector<fp::Vec2>{x1 - x0}));
    ASSERT_NEAR(r[0].x, x1.x, 1e-12);
    ASSERT_NEAR(r[0].y, x1.y, 1e-12);
  }
}

TEST(ConstrainedStep, ScalarExamples) {
  // Corrected velocity: (0.8 - 0.2) / 0.5.
  fp::TrajectoryState s{fp::Placement(1), fp::Placement(std::vector<fp::Vec2>{{0.2, 0.2}}), 0.5};
  const auto vh = fp::corrected_velocity(s, fp::Placement(std::vector<fp::Vec2>{{0.8, 0.8}}));
  EXPECT_NEAR(vh[0].x, 1.2, 1e-15);
  // Re-interpolation between x0 = 0 and x^1 = 1 at 0.6.
  const auto xn = fp::lerp(fp::Placement(1), fp::Placement(std::vector<fp::Vec2>{{1.0, 1.0}}), 0.6);
  EXPECT_DOUBLE_EQ(xn[0].x, 0.6);
}

TEST(ConstrainedStep, AlignedPredictionIsJustInterpolated) {
  const auto inst = desk_instance(3);
  fp::Rng rng(6);
  auto layout = fp::generate_sample(fp::GenConfig{}, fp::GenMode::masked, 3);
  const auto x0 = fp::sample_prior(fp::SourcePrior{}, inst.size(), rng);
  const double t = 0.3;
  fp::TrajectoryState s{x0, fp::lerp(x0, layout.placement, t), t};
  fp::Placement v(inst.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = layout.placement[i] - x0[i];
  // Nudge x_t so that x~1 lands exactly on the aligned layout.
  s.xt = fp::axpy(layout.placement, -(1 - t), v);
  const auto out = fp::constrained_step(s, v, inst, {}, 0.4);
  const auto expect = fp::lerp(x0, out.x_tilde, 0.4);
  EXPECT_EQ(out.x_hat, out.x_tilde);
  EXPECT_EQ(out.next.xt, expect);
}

TEST(ConstrainedStep, CollinearWithPriorAndProjection) {
  const auto inst = desk_instance(4);
  fp::Rng rng(7);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const auto x0 = fp::sample_prior(fp::SourcePrior::make(fp::PriorKind::standard_gaussian), inst.size(), rng);
    const auto xh = fp::testing::random_placement(rng, inst.size(), 1.0);
    const double s = fp::uniform(rng, 0.01, 0.99);
    const auto xn = fp::lerp(x0, xh, s);
    for (std::size_t i = 0; i < inst.size(); ++i) {
      // x_next - x0 must equal s (x^ - x0) componentwise.
      worst = std::max({worst, std::abs((xn[i].x - x0[i].x) - s * (xh[i].x - x0[i].x)),
                        std::abs((xn[i].y - x0[i].y) - s * (xh[i].y - x0[i].y))});
    }
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Projection, IdempotentOnAlignedLegalInput) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = fp::generate_sample(fp::GenConfig{}, fp::GenMode::masked, seed);
    const auto out = fp::project(s.instance, s.placement);
    EXPECT_EQ(out.placement, s.placement);
    EXPECT_EQ(fp::project(s.instance, out.placement).placement, out.placement);
  }
}

TEST(Projection, TwoIdenticalMacrosCompeteForOneCell) {
  fp::PlacementInstance inst;
  inst.macros = {{0, 0.25, 0.25, {}}, {1, 0.25, 0.25, {}}};
  // Grid 8x8 -> 0.25 cells. Both predicted at the center of cell (3, 3).
  const fp::Placement x(std::vector<fp::Vec2>{{-0.125 + 0.01, -0.125 + 0.02}, {-0.125 + 0.01, -0.125 + 0.02}});
  fp::ProjectionConfig cfg;
  cfg.grid_cols = cfg.grid_rows = 8;
  const auto out = fp::project(inst, x, cfg);
  const auto oracle = fp::testing::projection_oracle(inst, x, 8, 8, cfg.boundary_weight);
  ASSERT_TRUE(oracle.feasible);
  EXPECT_EQ(out.cells[0], (fp::Cell{3, 3}));
  EXPECT_NE(out.cells[1], out.cells[0]);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(out.cells[i].col, oracle.cells[i].first);
    EXPECT_EQ(out.cells[i].row, oracle.cells[i].second);
  }
  EXPECT_TRUE(fp::is_legal(inst, out.placement));
}

TEST(Projection, MatchesExhaustiveGreedyOracle) {
  fp::Rng rng(8);
  int cases = 0, agree = 0;
  while (cases < 200) {
    const int cols = fp::uniform_int(rng, 1, 12), rows = fp::uniform_int(rng, 1, 12);
    const int n = fp::uniform_int(rng, 1, 5);
    auto inst = fp::testing::random_instance(rng, n, 0, 0.1, 1.0);
    const auto x = fp::testing::random_placement(rng, inst.size(), 1.5);
    const double lambda = fp::uniform(rng, 0.0, 1.0);
    const auto oracle = fp::testing::projection_oracle(inst, x, cols, rows, lambda);
    if (!oracle.feasible) continue;  // would trigger refinement
    ++cases;
    fp::ProjectionConfig cfg{cols, rows, lambda, 0};
    const auto out = fp::project(inst, x, cfg);
    bool same = true;
    for (int i = 0; i < n; ++i)
      same = same && out.cells[i].col == oracle.cells[i].first && out.cells[i].row == oracle.cells[i].second;
    agree += same;
    EXPECT_TRUE(fp::is_legal(inst, out.placement));
  }
  EXPECT_EQ(agree, 200);
}

TEST(Projection, LegalOnSeededDeskInstances) {
  fp::Rng rng(9);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = desk_instance(seed);
    const auto x = fp::sample_prior(fp::SourcePrior::make(fp::PriorKind::standard_gaussian), inst.size(), rng);
    const auto out = fp::project(inst, x);
    ASSERT_EQ(fp::total_overlap(inst, out.placement), 0.0);
    ASSERT_TRUE(fp::all_inside_canvas(inst, out.placement));
  }
}

TEST(Projection, RefinesWhenGridIsTooCoarse) {
  fp::PlacementInstance inst;
  for (int i = 0; i < 5; ++i) inst.macros.push_back({i, 0.5, 0.5, {}});
  fp::ProjectionConfig cfg{2, 2, 0.1, 2};
  const auto out = fp::project(inst, fp::Placement(5), cfg);
  EXPECT_EQ(out.refinements, 1);
  EXPECT_EQ(out.grid_cols, 4);
  EXPECT_TRUE(fp::is_legal(inst, out.placement));
  cfg.max_refinements = 0;
  EXPECT_THROW(fp::project(inst, fp::Placement(5), cfg), fp::LegalizationError);
}

TEST(Projection, InfeasibleInputs) {
  fp::PlacementInstance big;
  for (int i = 0; i < 3; ++i) big.macros.push_back({i, 1.2, 1.2, {}});
  EXPECT_THROW(fp::project(big, fp::Placement(3)), fp::ConfigError);
  fp::PlacementInstance wide;
  for (int i = 0; i < 2; ++i) wide.macros.push_back({i, 1.05, 1.05, {}});
  EXPECT_THROW(fp::project(wide, fp::Placement(2)), fp::LegalizationError);
  fp::Placement nan(2);
  nan[0].x = std::nan("");
  EXPECT_THROW(fp::project(wide, nan), fp::NumericalError);
}

TEST(ConstrainedSample, ZeroFieldEndsAtProjectedPrior) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = desk_instance(seed);
    fp::SamplerConfig cfg;
    cfg.seed = seed;
    cfg.steps = 10;
    const auto r = fp::sample(fp::zero_field, inst, cfg);
    EXPECT_TRUE(fp::is_legal(inst, r.placement));
    // With v = 0, every x~1 equals x_t; the last one is the re-interpolated state.
    std::vector<fp::Placement> trace;
    fp::constrained_sample(fp::zero_field, inst, r.x0, cfg, &trace);
    EXPECT_EQ(trace.size(), 11u);
    EXPECT_EQ(fp::project(inst, trace[9]).placement, r.placement);
  }
}

TEST(ConstrainedSample, AlwaysLegalAndDeterministic) {
  // A field that pushes everything to the center, the worst case for overlap.
  auto crowd = [](const fp::Placement& x, double) {
    fp::Placement v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = {-x[i].x, -x[i].y};
    return v;
  };
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto inst = desk_instance(100 + seed);
    fp::SamplerConfig cfg;
    cfg.seed = seed;
    cfg.steps = 8;
    cfg.prior = fp::SourcePrior::make(seed % 2 ? fp::PriorKind::standard_gaussian : fp::PriorKind::uniform);
    const auto a = fp::sample(crowd, inst, cfg);
    ASSERT_TRUE(fp::is_legal(inst, a.placement));
    ASSERT_EQ(a.placement, fp::sample(crowd, inst, cfg).placement);
  }
}

TEST(ConstrainedSample, ProjectionScheduleStillEndsLegal) {
  const auto inst = desk_instance(5);
  fp::SamplerConfig cfg;
  cfg.steps = 9;
  cfg.project_every = 4;
  int calls = 0;
  auto field = [&](const fp::Placement& x, double) {
    ++calls;
    return fp::Placement(x.size());
  };
  EXPECT_TRUE(fp::is_legal(inst, fp::sample(field, inst, cfg).placement));
  EXPECT_EQ(calls, 9);
}
