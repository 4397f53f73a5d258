#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "flowplace/core/rng.hpp"
#include "flowplace/core/types.hpp"
#include "flowplace/nn/autodiff.hpp"
#include "flowplace/nn/time_embedding.hpp"

namespace flowplace::nn {

struct ModelConfig {
  int hidden = 64;
  int heads = 4;
  int blocks = 3;
  int time_dim = 32;
  double omega_max = 64.0;

  void validate() const {
    if (hidden < 1 || heads < 1 || hidden % heads != 0)
      throw ConfigError("hidden width must be a positive multiple of the head count");
    if (blocks < 0) throw ConfigError("block count must be >= 0");
    if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("time_dim must be even and >= 2");
    if (!(omega_max >= 1.0)) throw ConfigError("omega_max must be >= 1");
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
};

/// Per-instance graph tensors, built once and reused for every time step.
template <class T>
struct GraphInput {
  std::size_t nodes = 0;
  Matrix<T> sizes;          // N x 2: macro width and height as canvas fractions
  std::vector<std::size_t> src;  // directed edges, messages flow src -> dst
  std::vector<std::size_t> dst;
  Matrix<T> edge_features;  // E x 4: (dx, dy) of the dst pin then the src pin

  std::size_t edges() const { return src.size(); }
};

/// Each netlist edge contributes two directed edges so information flows both ways.
template <class T>
GraphInput<T> make_graph_input(const PlacementInstance& inst) {
  GraphInput<T> g;
  g.nodes = inst.size();
  g.sizes = Matrix<T>(g.nodes, 2);
  for (std::size_t i = 0; i < g.nodes; ++i) {
    g.sizes(i, 0) = static_cast<T>(inst.macros[i].width / kFrameExtent);
    g.sizes(i, 1) = static_cast<T>(inst.macros[i].height / kFrameExtent);
  }
  const auto& edges = inst.netlist.edges;
  g.edge_features = Matrix<T>(2 * edges.size(), 4);
  g.src.reserve(2 * edges.size());
  g.dst.reserve(2 * edges.size());
  std::size_t row = 0;
  auto add = [&](int to, int to_pin, int from, int from_pin) {
    const PinOffset& pt = inst.macros[to].pins[to_pin];
    const PinOffset& pf = inst.macros[from].pins[from_pin];
    g.dst.push_back(static_cast<std::size_t>(to));
    g.src.push_back(static_cast<std::size_t>(from));
    g.edge_features(row, 0) = static_cast<T>(pt.dx);
    g.edge_features(row, 1) = static_cast<T>(pt.dy);
    g.edge_features(row, 2) = static_cast<T>(pf.dx);
    g.edge_features(row, 3) = static_cast<T>(pf.dy);
    ++row;
  };
  for (const NetEdge& e : edges) {
    add(e.macro_a, e.pin_a, e.macro_b, e.pin_b);
    add(e.macro_b, e.pin_b, e.macro_a, e.pin_a);
  }
  return g;
}

template <class T>
Matrix<T> to_matrix(const Placement& p) {
  Matrix<T> m(p.size(), 2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m(i, 0) = static_cast<T>(p[i].x);
    m(i, 1) = static_cast<T>(p[i].y);
  }
  return m;
}

template <class T>
Placement to_placement(const Matrix<T>& m) {
  Placement p(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) p[i] = {static_cast<double>(m(i, 0)), static_cast<double>(m(i, 1))};
  return p;
}

/// Output of one graph-attention layer; `attention` is E x heads.
template <class T>
struct AttentionOutput {
  Var<T> features;
  Var<T> attention;
  bool has_attention = false;
};

/// GATv2-style attention over directed edges with edge features.
///
/// score(j -> i) = a^T LeakyReLU(W_src h_j + W_edge e_ji + W_dst h_i), softmax
/// over the incoming edges of i, per head. The message is W_src h_j + W_edge e_ji
/// and the layer returns h + (sum_j alpha_ji message_ji) W_out, so nodes with no
/// incoming edges come out unchanged.
template <class T>
AttentionOutput<T> graph_attention_layer(Var<T> h, const GraphInput<T>& g, Var<T> w_src, Var<T> w_dst,
                                         Var<T> w_edge, Var<T> att, Var<T> w_out, std::size_t heads,
                                         T slope = T(0.2)) {
  Tape<T>& tp = *h.tape;
  if (g.edges() == 0) return {h, Var<T>{}, false};
  Var<T> left = matmul(h, w_src);
  Var<T> right = matmul(h, w_dst);
  Var<T> xj = gather_rows(left, g.src);
  Var<T> xi = gather_rows(right, g.dst);
  Var<T> ee = matmul(tp.constant(g.edge_features), w_edge);
  Var<T> msg = add(xj, ee);
  Var<T> z = leaky_relu(add(msg, xi), slope);
  Var<T> alpha = segment_softmax(head_dot(z, att, heads), g.dst, g.nodes);
  Var<T> agg = segment_sum(scale_heads(msg, alpha), g.dst, g.nodes);
  return {add(h, matmul(agg, w_out)), alpha, true};
}

/// Dense multi-head scaled dot-product self-attention across all nodes.
template <class T>
Var<T> self_attention(Var<T> h, Var<T> wq, Var<T> wk, Var<T> wv, Var<T> wo, Var<T> bo, std::size_t heads) {
  Var<T> q = matmul(h, wq);
  Var<T> k = matmul(h, wk);
  Var<T> v = matmul(h, wv);
  const std::size_t d = q.cols() / heads;
  const T inv = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<Var<T>> outs;
  outs.reserve(heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    Var<T> qh = slice_cols(q, hd * d, d);
    Var<T> kh = slice_cols(k, hd * d, d);
    Var<T> vh = slice_cols(v, hd * d, d);
    Var<T> a = softmax_rows(scale(matmul(qh, transpose(kh)), inv));
    outs.push_back(matmul(a, vh));
  }
  return add_row(matmul(concat_cols(outs), wo), bo);
}

/// Velocity field v(x_t, t, G) over macro centers.
///
/// Encoder: node inputs [w, h, x, y] and the time embedding are projected to the
/// hidden width and summed. Each block then runs graph attention, dense
/// self-attention and a feed-forward layer, each followed by layer norm, with
/// residual connections. A two-layer decoder maps node states to (vx, vy); its
/// last layer starts at zero, so an untrained model is the zero field.
template <class T>
class VelocityModel {
 public:
  explicit VelocityModel(ModelConfig cfg = {}, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    build(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Parameter tensors registered on a tape for one forward pass.
  struct Bound {
    std::vector<Var<T>> vars;
  };

  Bound bind(Tape<T>& tp, bool requires_grad) const {
    Bound b;
    b.vars.reserve(params_.size());
    for (const auto& p : params_) b.vars.push_back(tp.leaf(p.value, requires_grad));
    return b;
  }

  /// Records the forward pass and returns the N x 2 velocity node.
  Var<T> forward(Tape<T>& tp, const Bound& b, const GraphInput<T>& g, const Matrix<T>& x_t, double t) const {
    if (x_t.rows != g.nodes || x_t.cols != 2) throw ContractError("x_t must be N x 2 for the given graph");
    const std::size_t heads = static_cast<std::size_t>(cfg_.heads);
    // Parameter order must match build().
    std::size_t k = 0;
    auto next = [&]() { return b.vars[k++]; };

    Matrix<T> feat(g.nodes, 4);
    for (std::size_t i = 0; i < g.nodes; ++i) {
      feat(i, 0) = g.sizes(i, 0);
      feat(i, 1) = g.sizes(i, 1);
      feat(i, 2) = x_t(i, 0);
      feat(i, 3) = x_t(i, 1);
    }
    const auto temb_d = time_embed(t, cfg_.time_dim, cfg_.omega_max);
    Matrix<T> temb(1, temb_d.size());
    for (std::size_t i = 0; i < temb_d.size(); ++i) temb.data[i] = static_cast<T>(temb_d[i]);

    Var<T> w_in = next(), b_in = next(), w_time = next(), b_time = next(), w_in2 = next(), b_in2 = next();
    Var<T> time_row = add_row(matmul(tp.constant(std::move(temb)), w_time), b_time);
    Var<T> h = silu(add_row(add_row(matmul(tp.constant(std::move(feat)), w_in), b_in), time_row));
    h = add_row(matmul(h, w_in2), b_in2);
    check(h, "encoder");

    for (int blk = 0; blk < cfg_.blocks; ++blk) {
      Var<T> g_src = next(), g_dst = next(), g_edge = next(), g_att = next(), g_out = next();
      Var<T> ln1_g = next(), ln1_b = next();
      Var<T> wq = next(), wk = next(), wv = next(), wo = next(), bo = next();
      Var<T> ln2_g = next(), ln2_b = next();
      Var<T> f1 = next(), fb1 = next(), f2 = next(), fb2 = next();
      Var<T> ln3_g = next(), ln3_b = next();
      const std::string tag = "block " + std::to_string(blk);

      h = layer_norm(graph_attention_layer(h, g, g_src, g_dst, g_edge, g_att, g_out, heads).features, ln1_g,
                     ln1_b);
      check(h, tag + " graph attention");
      h = layer_norm(add(h, self_attention(h, wq, wk, wv, wo, bo, heads)), ln2_g, ln2_b);
      check(h, tag + " self-attention");
      Var<T> ff = add_row(matmul(silu(add_row(matmul(h, f1), fb1)), f2), fb2);
      h = layer_norm(add(h, ff), ln3_g, ln3_b);
      check(h, tag + " feed-forward");
    }

    Var<T> d1 = next(), db1 = next(), d2 = next(), db2 = next();
    Var<T> out = add_row(matmul(silu(add_row(matmul(h, d1), db1)), d2), db2);
    check(out, "decoder");
    return out;
  }

  /// Inference-only evaluation (no gradient bookkeeping).
  Matrix<T> velocity(const GraphInput<T>& g, const Matrix<T>& x_t, double t) const {
    Tape<T> tp;
    Bound b = bind(tp, false);
    return forward(tp, b, g, x_t, t).value();
  }

  Placement velocity(const GraphInput<T>& g, const Placement& x_t, double t) const {
    return to_placement(velocity(g, to_matrix<T>(x_t), t));
  }

 private:
  static void check(Var<T> v, const std::string& where) {
    if (!v.value().finite()) throw NumericalError("non-finite activations after " + where);
  }

  void add_param(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng, double bound) {
    Matrix<T> m(rows, cols);
    for (auto& v : m.data) v = static_cast<T>(uniform(rng, -bound, bound));
    params_.push_back({name, std::move(m)});
  }
  void add_const(const std::string& name, std::size_t rows, std::size_t cols, T fill) {
    params_.push_back({name, Matrix<T>(rows, cols, fill)});
  }
  void add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    add_param(name + ".weight", in, out, rng, bound);
    if (bias) add_param(name + ".bias", 1, out, rng, bound);
  }

  void build(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t hd = static_cast<std::size_t>(cfg_.hidden);
    const std::size_t per_head = hd / static_cast<std::size_t>(cfg_.heads);
    add_linear("encoder.input", 4, hd, rng, true);
    add_linear("encoder.time", static_cast<std::size_t>(cfg_.time_dim), hd, rng, true);
    add_linear("encoder.mix", hd, hd, rng, true);
    for (int blk = 0; blk < cfg_.blocks; ++blk) {
      const std::string p = "block" + std::to_string(blk) + ".";
      add_linear(p + "gat.src", hd, hd, rng, false);
      add_linear(p + "gat.dst", hd, hd, rng, false);
      add_linear(p + "gat.edge", 4, hd, rng, false);
      add_param(p + "gat.att", 1, hd, rng, 1.0 / std::sqrt(static_cast<double>(per_head)));
      add_linear(p + "gat.out", hd, hd, rng, false);
      add_const(p + "norm1.gain", 1, hd, T(1));
      add_const(p + "norm1.bias", 1, hd, T(0));
      add_linear(p + "attn.query", hd, hd, rng, false);
      add_linear(p + "attn.key", hd, hd, rng, false);
      add_linear(p + "attn.value", hd, hd, rng, false);
      add_linear(p + "attn.out", hd, hd, rng, true);
      add_const(p + "norm2.gain", 1, hd, T(1));
      add_const(p + "norm2.bias", 1, hd, T(0));
      add_linear(p + "ffn.in", hd, hd, rng, true);
      add_linear(p + "ffn.out", hd, hd, rng, true);
      add_const(p + "norm3.gain", 1, hd, T(1));
      add_const(p + "norm3.bias", 1, hd, T(0));
    }
    add_linear("decoder.hidden", hd, hd, rng, true);
    add_const("decoder.out.weight", hd, 2, T(0));
    add_const("decoder.out.bias", 1, 2, T(0));
  }

  ModelConfig cfg_;
  std::vector<Parameter<T>> params_;
};

/// Converts parameters to another precision (e.g. float model -> double for
/// gradient checks).
template <class To, class From>
VelocityModel<To> convert_model(const VelocityModel<From>& src) {
  VelocityModel<To> dst(src.config(), 0);
  auto& dp = dst.parameters();
  const auto& sp = src.parameters();
  for (std::size_t i = 0; i < sp.size(); ++i)
    for (std::size_t j = 0; j < sp[i].value.size(); ++j)
      dp[i].value.data[j] = static_cast<To>(sp[i].value.data[j]);
  return dst;
}

/// Sets every parameter to uniform noise; used to exercise models whose
/// decoder would otherwise be zero.
template <class T>
void randomize_parameters(VelocityModel<T>& model, std::uint64_t seed, double bound = 0.5) {
  Rng rng(seed);
  for (auto& p : model.parameters()) {
    const double base = p.name.find(".gain") != std::string::npos ? 1.0 : 0.0;
    for (auto& v : p.value.data) v = static_cast<T>(base + uniform(rng, -bound, bound));
  }
}

}  // namespace flowplace::nn
