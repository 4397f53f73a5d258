#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "flowplace/nn/checkpoint.hpp"
#include "flowplace/nn/velocity_model.hpp"
#include "test_util.hpp"

namespace fp = flowplace;
namespace nn = flowplace::nn;

namespace {

struct Fixture {
  fp::PlacementInstance inst;
  fp::Placement x;
};

Fixture random_fixture(std::uint64_t seed, int n, int edges) {
  fp::Rng rng(seed);
  Fixture f{fp::testing::random_instance(rng, n, edges), {}};
  f.x = fp::testing::random_placement(rng, f.inst.size(), 1.0);
  return f;
}

// Scalar head used for gradient checks: sum of outputs times fixed weights.
template <class T>
nn::Var<T> loss_head(nn::Tape<T>& tp, nn::Var<T> out, std::uint64_t seed) {
  fp::Rng rng(seed);
  nn::Matrix<T> w(out.rows(), out.cols());
  for (auto& v : w.data) v = static_cast<T>(fp::uniform(rng, -1.0, 1.0));
  return nn::sum(nn::mul(out, tp.constant(std::move(w))));
}

double evaluate(const nn::VelocityModel<double>& m, const nn::GraphInput<double>& g, const nn::Matrix<double>& x,
                double t) {
  nn::Tape<double> tp;
  auto b = m.bind(tp, false);
  return loss_head(tp, m.forward(tp, b, g, x, t), 99).value().data[0];
}

}  // namespace

TEST(TimeEmbedding, ZeroTimeAndRange) {
  const auto e0 = nn::time_embed(0.0, 32);
  for (std::size_t k = 0; k < e0.size(); k += 2) {
    EXPECT_EQ(e0[k], 0.0);
    EXPECT_EQ(e0[k + 1], 1.0);
  }
  for (double t : {0.1, 0.37, 0.5, 0.99, 1.0})
    for (double v : nn::time_embed(t, 32)) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
}

TEST(TimeEmbedding, LipschitzAtMaxFrequency) {
  // |d/dt sin(w t)| <= w <= omega_max = 64, so a 1e-7 step moves entries at most 6.4e-6.
  for (double t : {0.0, 0.25, 0.5, 0.75, 0.9999998}) {
    const auto a = nn::time_embed(t, 32);
    const auto b = nn::time_embed(t + 1e-7, 32);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LE(std::abs(a[k] - b[k]), 1e-5);
  }
}

TEST(TimeEmbedding, RejectsBadArguments) {
  EXPECT_THROW(nn::time_embed(0.5, 31), fp::ContractError);
  EXPECT_THROW(nn::time_embed(1.5, 32), fp::ContractError);
}

TEST(VelocityModel, ZeroDecoderGivesZeroVelocity) {
  nn::VelocityModel<float> model({}, 3);
  auto f = random_fixture(1, 7, 9);
  const auto g = nn::make_graph_input<float>(f.inst);
  for (double t : {0.0, 0.3, 1.0}) {
    const auto v = model.velocity(g, nn::to_matrix<float>(f.x), t);
    ASSERT_EQ(v.rows, 7u);
    ASSERT_EQ(v.cols, 2u);
    for (float x : v.data) EXPECT_EQ(x, 0.0f);
  }
}

TEST(VelocityModel, ParameterCountIsDeterministic) {
  nn::VelocityModel<float> a({}, 1), b({}, 2);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
  nn::ModelConfig small{32, 4, 2, 16, 64.0};
  EXPECT_LT(nn::VelocityModel<float>(small, 1).parameter_count(), a.parameter_count());
}

TEST(VelocityModel, SizeAgnosticAndDeterministic) {
  nn::VelocityModel<double> model({}, 5);
  nn::randomize_parameters(model, 6, 0.3);
  for (int n : {4, 9, 17, 33, 64}) {
    auto f = random_fixture(100 + n, n, 2 * n);
    const auto g = nn::make_graph_input<double>(f.inst);
    const auto x = nn::to_matrix<double>(f.x);
    const auto v1 = model.velocity(g, x, 0.4);
    const auto v2 = model.velocity(g, x, 0.4);
    ASSERT_EQ(v1.rows, static_cast<std::size_t>(n));
    EXPECT_TRUE(v1.finite());
    EXPECT_EQ(v1, v2);  // bitwise
  }
}

TEST(VelocityModel, PermutationEquivariant) {
  nn::VelocityModel<double> model({}, 7);
  nn::randomize_parameters(model, 8, 0.3);
  fp::Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    auto f = random_fixture(200 + trial, 10, 18);
    std::vector<std::size_t> perm(f.inst.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto [pi, px] = fp::testing::permute(f.inst, f.x, perm);
    const auto v = model.velocity(nn::make_graph_input<double>(f.inst), f.x, 0.6);
    const auto vp = model.velocity(nn::make_graph_input<double>(pi), px, 0.6);
    // Exact up to floating-point summation order.
    for (std::size_t i = 0; i < perm.size(); ++i) {
      EXPECT_NEAR(vp[i].x, v[perm[i]].x, 1e-12);
      EXPECT_NEAR(vp[i].y, v[perm[i]].y, 1e-12);
    }
  }
}

TEST(VelocityModel, ShapeMismatchThrows) {
  nn::VelocityModel<float> model({}, 1);
  auto f = random_fixture(3, 5, 4);
  const auto g = nn::make_graph_input<float>(f.inst);
  EXPECT_THROW(model.velocity(g, nn::Matrix<float>(4, 2), 0.5), fp::ContractError);
}

TEST(VelocityModel, NonFiniteInputReportsLayer) {
  nn::VelocityModel<float> model({}, 1);
  auto f = random_fixture(3, 5, 4);
  f.x[2].x = std::numeric_limits<double>::quiet_NaN();
  const auto g = nn::make_graph_input<float>(f.inst);
  try {
    model.velocity(g, nn::to_matrix<float>(f.x), 0.5);
    FAIL() << "expected NumericalError";
  } catch (const fp::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder"), std::string::npos);
  }
}

TEST(VelocityModel, GradientsMatchFiniteDifferences) {
  nn::VelocityModel<double> model({}, 11);
  nn::randomize_parameters(model, 12, 0.3);
  auto f = random_fixture(13, 4, 5);
  const auto g = nn::make_graph_input<double>(f.inst);
  const auto x = nn::to_matrix<double>(f.x);
  const double t = 0.35;

  nn::Tape<double> tp;
  auto bound = model.bind(tp, true);
  tp.backward(loss_head(tp, model.forward(tp, bound, g, x, t), 99));

  // Central differences at h = 1e-5 carry ~1e-10 roundoff for a loss of this
  // magnitude, so relative error is measured against a 1e-5 floor.
  constexpr double kGradFloor = 1e-5;
  fp::Rng rng(14);
  auto& params = model.parameters();
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t pi = static_cast<std::size_t>(fp::uniform_int(rng, 0, static_cast<int>(params.size()) - 1));
    auto& val = params[pi].value.data;
    const std::size_t ei = static_cast<std::size_t>(fp::uniform_int(rng, 0, static_cast<int>(val.size()) - 1));
    const double analytic = tp.gradient(bound.vars[pi]).data[ei];
    const double orig = val[ei];
    const double h = 1e-5;
    val[ei] = orig + h;
    const double up = evaluate(model, g, x, t);
    val[ei] = orig - h;
    const double down = evaluate(model, g, x, t);
    val[ei] = orig;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
    worst = std::max(worst, rel);
    EXPECT_LE(rel, 1e-4) << params[pi].name << "[" << ei << "] analytic " << analytic << " numeric " << numeric;
  }
  RecordProperty("max_relative_error", std::to_string(worst));
}

TEST(GraphAttention, NoEdgesIsResidual) {
  nn::Tape<double> tp;
  fp::Rng rng(1);
  auto inst = fp::testing::random_instance(rng, 4, 0);
  const auto g = nn::make_graph_input<double>(inst);
  nn::Matrix<double> h(4, 8);
  for (auto& v : h.data) v = fp::uniform(rng, -1, 1);
  auto w = [&](std::size_t r, std::size_t c) { return tp.constant(nn::Matrix<double>(r, c, 0.1)); };
  auto out = nn::graph_attention_layer(tp.constant(h), g, w(8, 8), w(8, 8), w(4, 8), w(1, 8), w(8, 8), 2);
  EXPECT_FALSE(out.has_attention);
  EXPECT_EQ(out.features.value(), h);
}

TEST(GraphAttention, WeightsNormalizePerNode) {
  nn::Tape<double> tp;
  fp::Rng rng(2);
  auto inst = fp::testing::random_instance(rng, 5, 7);
  // Node 4 gets exactly one neighbor.
  inst.netlist.edges.erase(std::remove_if(inst.netlist.edges.begin(), inst.netlist.edges.end(),
                                          [](const fp::NetEdge& e) { return e.macro_a == 4 || e.macro_b == 4; }),
                           inst.netlist.edges.end());
  inst.netlist.edges.push_back({4, 0, 0, 0});
  const auto g = nn::make_graph_input<double>(inst);
  auto rnd = [&](std::size_t r, std::size_t c) {
    nn::Matrix<double> m(r, c);
    for (auto& v : m.data) v = fp::uniform(rng, -1, 1);
    return tp.constant(std::move(m));
  };
  auto out = nn::graph_attention_layer(rnd(5, 8), g, rnd(8, 8), rnd(8, 8), rnd(4, 8), rnd(1, 8), rnd(8, 8), 2);
  ASSERT_TRUE(out.has_attention);
  const auto& a = out.attention.value();
  std::vector<std::vector<double>> sums(5, std::vector<double>(2, 0.0));
  std::vector<int> indeg(5, 0);
  for (std::size_t e = 0; e < g.edges(); ++e) {
    ++indeg[g.dst[e]];
    for (std::size_t h = 0; h < 2; ++h) sums[g.dst[e]][h] += a(e, h);
  }
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t h = 0; h < 2; ++h)
      if (indeg[i] > 0) EXPECT_NEAR(sums[i][h], 1.0, 1e-6);
  for (std::size_t e = 0; e < g.edges(); ++e)
    if (g.dst[e] == 4) {
      EXPECT_EQ(indeg[4], 1);
      EXPECT_EQ(a(e, 0), 1.0);
      EXPECT_EQ(a(e, 1), 1.0);
    }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  nn::VelocityModel<float> model({32, 4, 2, 16, 64.0}, 21);
  nn::randomize_parameters(model, 22, 0.4);
  const std::string bytes = nn::serialize_checkpoint(model);
  const auto loaded = nn::deserialize_checkpoint(bytes);
  EXPECT_EQ(loaded.config(), model.config());
  ASSERT_EQ(loaded.parameters().size(), model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    EXPECT_EQ(loaded.parameters()[i].name, model.parameters()[i].name);
    EXPECT_EQ(loaded.parameters()[i].value, model.parameters()[i].value);
  }
  EXPECT_EQ(nn::serialize_checkpoint(loaded), bytes);
}

TEST(Checkpoint, RejectsCorruptData) {
  nn::VelocityModel<float> model({16, 2, 1, 8, 64.0}, 1);
  std::string bytes = nn::serialize_checkpoint(model);
  EXPECT_THROW(nn::deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), fp::ParseError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(nn::deserialize_checkpoint(bad), fp::ParseError);
  bad = bytes;
  bad[4] = 9;  // version
  EXPECT_THROW(nn::deserialize_checkpoint(bad), fp::ParseError);
  EXPECT_THROW(nn::deserialize_checkpoint(bytes + "x"), fp::ParseError);
}
