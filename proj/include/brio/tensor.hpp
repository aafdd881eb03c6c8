// Copyright 2026 The brio-toy Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace brio {

/// Dense row-major matrix. Vectors are 1×n matrices.
template <typename T>
struct Matrix {
  using value_type = T;

  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0))
      : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Matrix&) const = default;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

// Row-wise kernels. Every output row depends only on the matching input row
// and is computed in a fixed order, so a one-row call reproduces the same
// bits as the corresponding row of a batched call.
namespace kernels {

// c = a·b  (a: n×k, b: k×m)
template <typename T>
void matmul(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  require(a.cols == b.rows, "matmul: inner dimensions differ");
  c = Matrix<T>(a.rows, b.cols);
  const std::size_t k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    T* crow = c.data.data() + i * m;
    const T* arow = a.data.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.data.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// c = a·bᵀ  (a: n×k, b: m×k)
template <typename T>
void matmul_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  require(a.cols == b.cols, "matmul_nt: inner dimensions differ");
  c = Matrix<T>(a.rows, b.rows);
  const std::size_t k = a.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* arow = a.data.data() + i * k;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const T* brow = b.data.data() + j * k;
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) = s;
    }
  }
}

// c += aᵀ·b  (a: n×k, b: n×m, c: k×m)
template <typename T>
void matmul_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* arow = a.data.data() + i * k;
    const T* brow = b.data.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* crow = c.data.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a·bᵀ  (a: n×m, b: k×m, c: n×k)
template <typename T>
void matmul_nt_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t m = a.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* arow = a.data.data() + i * m;
    T* crow = c.data.data() + i * c.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const T* brow = b.data.data() + j * m;
      T s = 0;
      for (std::size_t p = 0; p < m; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// c += a·b  (a: n×k, b: k×m, c: n×m)
template <typename T>
void matmul_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    T* crow = c.data.data() + i * m;
    const T* arow = a.data.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.data.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void add_row_bias(Matrix<T>& x, const Matrix<T>& bias) {
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) x(i, j) += bias.data[j];
}

inline constexpr double kLayerNormEps = 1e-5;

// Per-row normalization; mean and inverse std are written out for backward.
template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& gain,
                const Matrix<T>& bias, Matrix<T>& y, std::vector<T>* mean_out,
                std::vector<T>* rstd_out) {
  const std::size_t d = x.cols;
  y = Matrix<T>(x.rows, d);
  if (mean_out) mean_out->assign(x.rows, T(0));
  if (rstd_out) rstd_out->assign(x.rows, T(0));
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    double mu = 0;
    for (T v : row) mu += v;
    mu /= static_cast<double>(d);
    double var = 0;
    for (T v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    const T m = static_cast<T>(mu);
    const T rs = static_cast<T>(1.0 / std::sqrt(var + kLayerNormEps));
    for (std::size_t j = 0; j < d; ++j)
      y(i, j) = (row[j] - m) * rs * gain.data[j] + bias.data[j];
    if (mean_out) (*mean_out)[i] = m;
    if (rstd_out) (*rstd_out)[i] = rs;
  }
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

template <typename T>
T gelu(T x) {
  const T u = static_cast<T>(kGeluC) * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
  const T u = static_cast<T>(kGeluC) * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(u);
  const T du = static_cast<T>(kGeluC) * (T(1) + T(3 * 0.044715) * x * x);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
}

// Row-wise log-softmax with 64-bit normalizer.
template <typename T>
void log_softmax(const Matrix<T>& x, Matrix<T>& y) {
  y = Matrix<T>(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (T v : row) mx = std::max(mx, static_cast<double>(v));
    double s = 0;
    for (T v : row) s += std::exp(static_cast<double>(v) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < x.cols; ++j)
      y(i, j) = static_cast<T>(static_cast<double>(row[j]) - lse);
  }
}

// Multi-head scaled dot-product attention for one query row.
// keys/values are m×d; key j is visible iff j < visible && key_mask[j].
// probs (heads×m) receives the attention weights.
template <typename T>
void attend_row(std::span<const T> q, const Matrix<T>& k, const Matrix<T>& v,
                std::size_t heads, std::size_t visible,
                const std::vector<bool>* key_mask, std::span<T> out,
                std::span<T> probs) {
  const std::size_t d = q.size();
  const std::size_t dh = d / heads;
  const std::size_t m = k.rows;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::fill(out.begin(), out.end(), T(0));
  for (std::size_t h = 0; h < heads; ++h) {
    T* p = probs.data() + h * m;
    const std::size_t off = h * dh;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      const bool ok = j < visible && (!key_mask || (*key_mask)[j]);
      if (!ok) {
        p[j] = -std::numeric_limits<T>::infinity();
        continue;
      }
      const T* krow = k.data.data() + j * d + off;
      T s = 0;
      for (std::size_t c = 0; c < dh; ++c) s += q[off + c] * krow[c];
      p[j] = s * scale;
      mx = std::max(mx, p[j]);
    }
    if (mx == -std::numeric_limits<T>::infinity()) {
      // Nothing visible: the head contributes zeros.
      for (std::size_t j = 0; j < m; ++j) p[j] = T(0);
      continue;
    }
    double z = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const T e = p[j] == -std::numeric_limits<T>::infinity()
                      ? T(0)
                      : static_cast<T>(std::exp(static_cast<double>(p[j] - mx)));
      p[j] = e;
      z += e;
    }
    const T inv = static_cast<T>(1.0 / z);
    for (std::size_t j = 0; j < m; ++j) {
      p[j] *= inv;
      const T w = p[j];
      if (w == T(0)) continue;
      const T* vrow = v.data.data() + j * d + off;
      for (std::size_t c = 0; c < dh; ++c) out[off + c] += w * vrow[c];
    }
  }
}

}  // namespace kernels
}  // namespace brio
