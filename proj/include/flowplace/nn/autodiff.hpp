#pragma once

#include <functional>
#include <string>
#include <utility>

#include "flowplace/nn/matrix.hpp"

// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records every intermediate value of one forward pass together with a
// closure that pushes the node's output gradient back to its inputs. Nodes are
// appended in evaluation order, so a single reverse sweep is a valid
// topological order. Only first derivatives are supported.

namespace flowplace::nn {

template <class T>
class Tape;

template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<T>& value() const { return tape->value(id); }
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

template <class T>
class Tape {
 public:
  Tape() { nodes_.reserve(512); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Matrix<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }
  Var<T> constant(Matrix<T> value) { return leaf(std::move(value), false); }

  /// Id the next pushed node will receive.
  std::size_t next_id() const { return nodes_.size(); }

  Var<T> push(Matrix<T> value, bool needs_grad, std::function<void()> backward) {
    nodes_.push_back({std::move(value), Matrix<T>{}, needs_grad, std::move(backward)});
    return {this, nodes_.size() - 1};
  }

  const Matrix<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(Var<T> v) const { return nodes_[v.id].needs_grad; }

  /// Gradient buffer of a node, zero-allocated on first use.
  Matrix<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.grad.same_shape(n.value) || n.grad.size() != n.value.size())
      n.grad = Matrix<T>(n.value.rows, n.value.cols);
    return n.grad;
  }

  /// Gradient w.r.t. a node after backward(); zeros if nothing flowed into it.
  Matrix<T> gradient(Var<T> v) const {
    const Node& n = nodes_[v.id];
    if (has_grad(n)) return n.grad;
    return Matrix<T>(n.value.rows, n.value.cols);
  }

  /// Reverse sweep from a scalar output.
  void backward(Var<T> root) {
    if (root.tape != this) throw ContractError("backward on a foreign tape");
    if (value(root.id).size() != 1) throw ContractError("backward root must be a scalar");
    grad(root.id).data[0] += T(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.backward || !has_grad(n)) continue;
      n.backward();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool needs_grad;
    std::function<void()> backward;
  };

  static bool has_grad(const Node& n) {
    return n.grad.same_shape(n.value) && n.grad.size() == n.value.size() && n.value.size() > 0;
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <class T>
Tape<T>& tape_of(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw ContractError("operands recorded on different tapes");
  return *a.tape;
}

template <class T>
void require_shape(bool ok, const char* op, const Matrix<T>& a, const Matrix<T>& b) {
  if (!ok)
    throw ContractError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows) + "x" +
                        std::to_string(a.cols) + " and " + std::to_string(b.rows) + "x" +
                        std::to_string(b.cols));
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <class T>
void add_into(Matrix<T>& dst, const Matrix<T>& src) {
  for (std::size_t i = 0; i < src.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace detail

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tp = detail::tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_shape(av.cols == bv.rows, "matmul", av, bv);
  Matrix<T> out(av.rows, bv.cols);
  gemm_nn(av, bv, out, false);
  const bool ng = tp.needs_grad(a) || tp.needs_grad(b);
  if (!ng) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  const bool ga = tp.needs_grad(a), gb = tp.needs_grad(b);
  return tp.push(std::move(out), true, [t, self, a, b, ga, gb] {
    const Matrix<T>& g = t->grad(self);
    if (ga) gemm_nt_acc(g, t->value(b.id), t->grad(a.id));
    if (gb) gemm_tn_acc(t->value(a.id), g, t->grad(b.id));
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tp = detail::tape_of(a, b);
  detail::require_shape(a.value().same_shape(b.value()), "add", a.value(), b.value());
  Matrix<T> out = a.value();
  detail::add_into(out, b.value());
  const bool ga = tp.needs_grad(a), gb = tp.needs_grad(b);
  if (!ga && !gb) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, b, ga, gb] {
    const Matrix<T>& g = t->grad(self);
    if (ga) detail::add_into(t->grad(a.id), g);
    if (gb) detail::add_into(t->grad(b.id), g);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tp = detail::tape_of(a, b);
  detail::require_shape(a.value().same_shape(b.value()), "sub", a.value(), b.value());
  Matrix<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  const bool ga = tp.needs_grad(a), gb = tp.needs_grad(b);
  if (!ga && !gb) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, b, ga, gb] {
    const Matrix<T>& g = t->grad(self);
    if (ga) detail::add_into(t->grad(a.id), g);
    if (gb) {
      auto& gbm = t->grad(b.id);
      for (std::size_t i = 0; i < g.data.size(); ++i) gbm.data[i] -= g.data[i];
    }
  });
}

/// Elementwise product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tp = detail::tape_of(a, b);
  detail::require_shape(a.value().same_shape(b.value()), "mul", a.value(), b.value());
  Matrix<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  const bool ga = tp.needs_grad(a), gb = tp.needs_grad(b);
  if (!ga && !gb) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, b, ga, gb] {
    const Matrix<T>& g = t->grad(self);
    const auto& av = t->value(a.id);
    const auto& bv = t->value(b.id);
    if (ga) {
      auto& gm = t->grad(a.id);
      for (std::size_t i = 0; i < g.data.size(); ++i) gm.data[i] += g.data[i] * bv.data[i];
    }
    if (gb) {
      auto& gm = t->grad(b.id);
      for (std::size_t i = 0; i < g.data.size(); ++i) gm.data[i] += g.data[i] * av.data[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tape<T>& tp = *a.tape;
  Matrix<T> out = a.value();
  for (auto& v : out.data) v *= s;
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, s] {
    const Matrix<T>& g = t->grad(self);
    auto& gm = t->grad(a.id);
    for (std::size_t i = 0; i < g.data.size(); ++i) gm.data[i] += s * g.data[i];
  });
}

/// a (n x c) + row (1 x c) broadcast over rows.
template <class T>
Var<T> add_row(Var<T> a, Var<T> row) {
  Tape<T>& tp = detail::tape_of(a, row);
  const auto& av = a.value();
  const auto& rv = row.value();
  detail::require_shape(rv.rows == 1 && rv.cols == av.cols, "add_row", av, rv);
  Matrix<T> out = av;
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += rv.data[j];
  const bool ga = tp.needs_grad(a), gr = tp.needs_grad(row);
  if (!ga && !gr) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, row, ga, gr] {
    const Matrix<T>& g = t->grad(self);
    if (ga) detail::add_into(t->grad(a.id), g);
    if (gr) {
      auto& gm = t->grad(row.id);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) gm.data[j] += g(i, j);
    }
  });
}

/// x * sigmoid(x)
template <class T>
Var<T> silu(Var<T> a) {
  Tape<T>& tp = *a.tape;
  Matrix<T> out = a.value();
  for (auto& v : out.data) v = v * detail::sigmoid(v);
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a] {
    const Matrix<T>& g = t->grad(self);
    const auto& x = t->value(a.id);
    auto& gm = t->grad(a.id);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const T s = detail::sigmoid(x.data[i]);
      gm.data[i] += g.data[i] * s * (T(1) + x.data[i] * (T(1) - s));
    }
  });
}

template <class T>
Var<T> leaky_relu(Var<T> a, T slope) {
  Tape<T>& tp = *a.tape;
  Matrix<T> out = a.value();
  for (auto& v : out.data) v = v > T(0) ? v : slope * v;
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, slope] {
    const Matrix<T>& g = t->grad(self);
    const auto& x = t->value(a.id);
    auto& gm = t->grad(a.id);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      gm.data[i] += x.data[i] > T(0) ? g.data[i] : slope * g.data[i];
  });
}

/// Sum of all entries, as a 1x1 matrix.
template <class T>
Var<T> sum(Var<T> a) {
  Tape<T>& tp = *a.tape;
  T s = T(0);
  for (T v : a.value().data) s += v;
  Matrix<T> out(1, 1, s);
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a] {
    const T g = t->grad(self).data[0];
    for (auto& v : t->grad(a.id).data) v += g;
  });
}

/// Sum of squared entries.
template <class T>
Var<T> sum_squares(Var<T> a) {
  Tape<T>& tp = *a.tape;
  T s = T(0);
  for (T v : a.value().data) s += v * v;
  Matrix<T> out(1, 1, s);
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a] {
    const T g = t->grad(self).data[0];
    const auto& x = t->value(a.id);
    auto& gm = t->grad(a.id);
    for (std::size_t i = 0; i < x.data.size(); ++i) gm.data[i] += T(2) * g * x.data[i];
  });
}

/// Row-wise layer normalization with learned gain and bias (both 1 x c).
template <class T>
Var<T> layer_norm(Var<T> a, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  Tape<T>& tp = detail::tape_of(a, gain);
  const auto& x = a.value();
  const std::size_t n = x.rows, c = x.cols;
  Matrix<T> xhat(n, c);
  std::vector<T> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    T mean = T(0);
    for (std::size_t j = 0; j < c; ++j) mean += x(i, j);
    mean /= T(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= T(c);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) xhat(i, j) = (x(i, j) - mean) * inv_std[i];
  }
  Matrix<T> out(n, c);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = xhat(i, j) * gv.data[j] + bv.data[j];
  const bool ga = tp.needs_grad(a), gg = tp.needs_grad(gain), gb = tp.needs_grad(bias);
  if (!ga && !gg && !gb) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true,
                 [t, self, a, gain, bias, ga, gg, gb, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)] {
                   const Matrix<T>& g = t->grad(self);
                   const std::size_t n = g.rows, c = g.cols;
                   const auto& gv = t->value(gain.id);
                   if (gg) {
                     auto& gm = t->grad(gain.id);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < c; ++j) gm.data[j] += g(i, j) * xhat(i, j);
                   }
                   if (gb) {
                     auto& gm = t->grad(bias.id);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < c; ++j) gm.data[j] += g(i, j);
                   }
                   if (ga) {
                     auto& gm = t->grad(a.id);
                     for (std::size_t i = 0; i < n; ++i) {
                       T m1 = T(0), m2 = T(0);
                       for (std::size_t j = 0; j < c; ++j) {
                         const T gx = g(i, j) * gv.data[j];
                         m1 += gx;
                         m2 += gx * xhat(i, j);
                       }
                       m1 /= T(c);
                       m2 /= T(c);
                       for (std::size_t j = 0; j < c; ++j) {
                         const T gx = g(i, j) * gv.data[j];
                         gm(i, j) += inv_std[i] * (gx - m1 - xhat(i, j) * m2);
                       }
                     }
                   }
                 });
}

/// Softmax along each row.
template <class T>
Var<T> softmax_rows(Var<T> a) {
  Tape<T>& tp = *a.tape;
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.rows; ++i) {
    auto r = out.row(i);
    T mx = r[0];
    for (T v : r) mx = std::max(mx, v);
    T s = T(0);
    for (T& v : r) {
      v = std::exp(v - mx);
      s += v;
    }
    for (T& v : r) v /= s;
  }
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a] {
    const Matrix<T>& g = t->grad(self);
    const Matrix<T>& y = t->value(self);
    auto& gm = t->grad(a.id);
    for (std::size_t i = 0; i < g.rows; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < g.cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols; ++j) gm(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  Tape<T>& tp = *a.tape;
  const auto& x = a.value();
  Matrix<T> out(x.cols, x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a] {
    const Matrix<T>& g = t->grad(self);
    auto& gm = t->grad(a.id);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) gm(j, i) += g(i, j);
  });
}

/// Columns [start, start + len).
template <class T>
Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t len) {
  Tape<T>& tp = *a.tape;
  const auto& x = a.value();
  if (start + len > x.cols) throw ContractError("slice_cols out of range");
  Matrix<T> out(x.rows, len);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < len; ++j) out(i, j) = x(i, start + j);
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, start] {
    const Matrix<T>& g = t->grad(self);
    auto& gm = t->grad(a.id);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) gm(i, start + j) += g(i, j);
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  Tape<T>& tp = *parts.front().tape;
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  bool ng = false;
  for (const auto& p : parts) {
    if (p.tape != &tp || p.rows() != n) throw ContractError("concat_cols: mismatched parts");
    total += p.cols();
    ng = ng || tp.needs_grad(p);
  }
  Matrix<T> out(n, total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& x = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) out(i, off + j) = x(i, j);
    off += x.cols;
  }
  if (!ng) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, parts] {
    const Matrix<T>& g = t->grad(self);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t c = t->value(p.id).cols;
      if (t->needs_grad(p)) {
        auto& gm = t->grad(p.id);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < c; ++j) gm(i, j) += g(i, off + j);
      }
      off += c;
    }
  });
}

/// out[e] = a[index[e]]
template <class T>
Var<T> gather_rows(Var<T> a, std::vector<std::size_t> index) {
  Tape<T>& tp = *a.tape;
  const auto& x = a.value();
  Matrix<T> out(index.size(), x.cols);
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= x.rows) throw ContractError("gather_rows index out of range");
    for (std::size_t j = 0; j < x.cols; ++j) out(e, j) = x(index[e], j);
  }
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, index = std::move(index)] {
    const Matrix<T>& g = t->grad(self);
    auto& gm = t->grad(a.id);
    for (std::size_t e = 0; e < index.size(); ++e)
      for (std::size_t j = 0; j < g.cols; ++j) gm(index[e], j) += g(e, j);
  });
}

/// out[s] = sum of a[e] over entries with segment[e] == s; out has `count` rows.
template <class T>
Var<T> segment_sum(Var<T> a, std::vector<std::size_t> segment, std::size_t count) {
  Tape<T>& tp = *a.tape;
  const auto& x = a.value();
  if (segment.size() != x.rows) throw ContractError("segment_sum: one segment id per row required");
  Matrix<T> out(count, x.cols);
  for (std::size_t e = 0; e < segment.size(); ++e) {
    if (segment[e] >= count) throw ContractError("segment_sum id out of range");
    for (std::size_t j = 0; j < x.cols; ++j) out(segment[e], j) += x(e, j);
  }
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, segment = std::move(segment)] {
    const Matrix<T>& g = t->grad(self);
    auto& gm = t->grad(a.id);
    for (std::size_t e = 0; e < segment.size(); ++e)
      for (std::size_t j = 0; j < g.cols; ++j) gm(e, j) += g(segment[e], j);
  });
}

/// Softmax of each column over the rows that share a segment id.
template <class T>
Var<T> segment_softmax(Var<T> a, std::vector<std::size_t> segment, std::size_t count) {
  Tape<T>& tp = *a.tape;
  const auto& x = a.value();
  if (segment.size() != x.rows) throw ContractError("segment_softmax: one segment id per row required");
  const std::size_t c = x.cols;
  Matrix<T> mx(count, c, -std::numeric_limits<T>::infinity());
  for (std::size_t e = 0; e < x.rows; ++e)
    for (std::size_t j = 0; j < c; ++j) mx(segment[e], j) = std::max(mx(segment[e], j), x(e, j));
  Matrix<T> out(x.rows, c);
  Matrix<T> denom(count, c);
  for (std::size_t e = 0; e < x.rows; ++e)
    for (std::size_t j = 0; j < c; ++j) {
      out(e, j) = std::exp(x(e, j) - mx(segment[e], j));
      denom(segment[e], j) += out(e, j);
    }
  for (std::size_t e = 0; e < x.rows; ++e)
    for (std::size_t j = 0; j < c; ++j) out(e, j) /= denom(segment[e], j);
  if (!tp.needs_grad(a)) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, a, count, segment = std::move(segment)] {
    const Matrix<T>& g = t->grad(self);
    const Matrix<T>& y = t->value(self);
    auto& gm = t->grad(a.id);
    Matrix<T> dot(count, g.cols);
    for (std::size_t e = 0; e < g.rows; ++e)
      for (std::size_t j = 0; j < g.cols; ++j) dot(segment[e], j) += g(e, j) * y(e, j);
    for (std::size_t e = 0; e < g.rows; ++e)
      for (std::size_t j = 0; j < g.cols; ++j)
        gm(e, j) += y(e, j) * (g(e, j) - dot(segment[e], j));
  });
}

/// Per-head dot product: z is E x (heads * d), w is 1 x (heads * d); the
/// result is E x heads with out[e, h] = sum_k z[e, h*d + k] * w[h*d + k].
template <class T>
Var<T> head_dot(Var<T> z, Var<T> w, std::size_t heads) {
  Tape<T>& tp = detail::tape_of(z, w);
  const auto& zv = z.value();
  const auto& wv = w.value();
  detail::require_shape(wv.rows == 1 && wv.cols == zv.cols && zv.cols % heads == 0, "head_dot", zv, wv);
  const std::size_t d = zv.cols / heads;
  Matrix<T> out(zv.rows, heads);
  for (std::size_t e = 0; e < zv.rows; ++e)
    for (std::size_t h = 0; h < heads; ++h) {
      T s = T(0);
      for (std::size_t k = 0; k < d; ++k) s += zv(e, h * d + k) * wv.data[h * d + k];
      out(e, h) = s;
    }
  const bool gz = tp.needs_grad(z), gw = tp.needs_grad(w);
  if (!gz && !gw) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, z, w, gz, gw, heads, d] {
    const Matrix<T>& g = t->grad(self);
    const auto& zv = t->value(z.id);
    const auto& wv = t->value(w.id);
    if (gz) {
      auto& gm = t->grad(z.id);
      for (std::size_t e = 0; e < g.rows; ++e)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t k = 0; k < d; ++k) gm(e, h * d + k) += g(e, h) * wv.data[h * d + k];
    }
    if (gw) {
      auto& gm = t->grad(w.id);
      for (std::size_t e = 0; e < g.rows; ++e)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t k = 0; k < d; ++k) gm.data[h * d + k] += g(e, h) * zv(e, h * d + k);
    }
  });
}

/// Scales each head block of m (E x heads*d) by the matching column of
/// weights (E x heads).
template <class T>
Var<T> scale_heads(Var<T> m, Var<T> weights) {
  Tape<T>& tp = detail::tape_of(m, weights);
  const auto& mv = m.value();
  const auto& wv = weights.value();
  detail::require_shape(wv.rows == mv.rows && wv.cols > 0 && mv.cols % wv.cols == 0, "scale_heads", mv,
                        wv);
  const std::size_t heads = wv.cols, d = mv.cols / heads;
  Matrix<T> out(mv.rows, mv.cols);
  for (std::size_t e = 0; e < mv.rows; ++e)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t k = 0; k < d; ++k) out(e, h * d + k) = mv(e, h * d + k) * wv(e, h);
  const bool gm_ = tp.needs_grad(m), gw = tp.needs_grad(weights);
  if (!gm_ && !gw) return tp.push(std::move(out), false, nullptr);
  const std::size_t self = tp.next_id();
  Tape<T>* t = &tp;
  return tp.push(std::move(out), true, [t, self, m, weights, gm_, gw, heads, d] {
    const Matrix<T>& g = t->grad(self);
    const auto& mv = t->value(m.id);
    const auto& wv = t->value(weights.id);
    if (gm_) {
      auto& gm = t->grad(m.id);
      for (std::size_t e = 0; e < g.rows; ++e)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t k = 0; k < d; ++k) gm(e, h * d + k) += g(e, h * d + k) * wv(e, h);
    }
    if (gw) {
      auto& gm = t->grad(weights.id);
      for (std::size_t e = 0; e < g.rows; ++e)
        for (std::size_t h = 0; h < heads; ++h) {
          T s = T(0);
          for (std::size_t k = 0; k < d; ++k) s += g(e, h * d + k) * mv(e, h * d + k);
          gm(e, h) += s;
        }
    }
  });
}

}  // namespace flowplace::nn
