#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "flowplace/core/errors.hpp"

namespace flowplace::nn {

/// Dense row-major matrix.
template <class T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const { return data.size(); }
  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool finite() const {
    return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
  }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// out (+)= a * b, a: n x k, b: k x m
template <class T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out, bool accumulate) {
  if (!accumulate) std::fill(out.data.begin(), out.data.end(), T(0));
  const std::size_t n = a.rows, k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < n; ++i) {
    T* o = out.data.data() + i * m;
    const T* ar = a.data.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ar[p];
      if (av == T(0)) continue;
      const T* br = b.data.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

// out += a * b^T, a: n x k, b: m x k
template <class T>
void gemm_nt_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  const std::size_t n = a.rows, k = a.cols, m = b.rows;
  for (std::size_t i = 0; i < n; ++i) {
    const T* ar = a.data.data() + i * k;
    T* o = out.data.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const T* br = b.data.data() + j * k;
      T s = T(0);
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      o[j] += s;
    }
  }
}

// out += a^T * b, a: k x n, b: k x m
template <class T>
void gemm_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  const std::size_t k = a.rows, n = a.cols, m = b.cols;
  for (std::size_t p = 0; p < k; ++p) {
    const T* ar = a.data.data() + p * n;
    const T* br = b.data.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const T av = ar[i];
      if (av == T(0)) continue;
      T* o = out.data.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

}  // namespace flowplace::nn
