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

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "brio/tensor.hpp"

namespace brio {

/// A named trainable array with its gradient buffer.
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
};

namespace ad {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape over matrix-valued nodes.
///
/// Nodes are appended in evaluation order, so walking the tape backwards is a
/// valid topological order. A tape built with `record == false` keeps values
/// only; it is what the decoders use.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix<T> value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, {}, false});
    return Var{nodes_.size() - 1};
  }

  /// Leaf bound to a trainable parameter; gradients flow into `p.grad`.
  Var param(Parameter<T>& p) {
    if (!record_) return param(static_cast<const Parameter<T>&>(p));
    if (!p.grad.same_shape(p.value)) p.grad = Matrix<T>(p.value.rows, p.value.cols);
    nodes_.push_back(Node{{}, {}, &p.value, &p.grad, {}, true});
    return Var{nodes_.size() - 1};
  }

  /// Read-only leaf; no gradient is tracked.
  Var param(const Parameter<T>& p) {
    nodes_.push_back(Node{{}, {}, &p.value, nullptr, {}, false});
    return Var{nodes_.size() - 1};
  }

  const Matrix<T>& value(Var v) const {
    const Node& n = at(v);
    return n.ref ? *n.ref : n.value;
  }

  bool needs_grad(Var v) const { return at(v).needs_grad; }

  /// Gradient buffer of a node, allocated on first use.
  Matrix<T>& grad(Var v) {
    Node& n = at(v);
    const Matrix<T>& val = n.ref ? *n.ref : n.value;
    if (!n.grad.same_shape(val)) n.grad = Matrix<T>(val.rows, val.cols);
    return n.grad;
  }

  /// Appends an op result. `inputs` decide whether the node is differentiable.
  Var push(Matrix<T> value, std::initializer_list<Var> inputs, Backward back) {
    bool ng = false;
    if (record_)
      for (Var in : inputs) ng = ng || at(in).needs_grad;
    nodes_.push_back(
        Node{std::move(value), {}, nullptr, nullptr, ng ? std::move(back) : Backward{}, ng});
    return Var{nodes_.size() - 1};
  }

  Var push(Matrix<T> value, const std::vector<Var>& inputs, Backward back) {
    bool ng = false;
    if (record_)
      for (Var in : inputs) ng = ng || at(in).needs_grad;
    nodes_.push_back(
        Node{std::move(value), {}, nullptr, nullptr, ng ? std::move(back) : Backward{}, ng});
    return Var{nodes_.size() - 1};
  }

  /// Propagates d(root)/d(node) to every parameter reachable from `root`.
  /// Parameter gradients accumulate across calls; node gradients do not.
  void backward(Var root) {
    if (!record_) throw std::logic_error("backward: tape was built without recording");
    if (nodes_.empty() || root.id >= nodes_.size())
      throw std::logic_error("backward: no forward pass has produced this loss");
    const Matrix<T>& rv = value(root);
    if (rv.rows != 1 || rv.cols != 1)
      throw std::logic_error("backward: loss must be a scalar");
    for (Node& n : nodes_) n.grad.fill(T(0));
    grad(root).data[0] = T(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.sink) {
        auto& dst = n.sink->data;
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad.data[j];
      } else if (n.back) {
        n.back(*this);
      }
    }
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    const Matrix<T>* ref;
    Matrix<T>* sink;
    Backward back;
    bool needs_grad;
  };

  Node& at(Var v) {
    if (v.id >= nodes_.size()) throw std::out_of_range("tape: unknown variable");
    return nodes_[v.id];
  }
  const Node& at(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("tape: unknown variable");
    return nodes_[v.id];
  }

  bool record_;
  std::vector<Node> nodes_;
};

template <typename T>
T scalar(const Tape<T>& t, Var v) {
  return t.value(v).data.at(0);
}

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  Matrix<T> c;
  kernels::matmul(t.value(a), t.value(b), c);
  return t.push(std::move(c), {a, b}, [a, b, self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(a)) kernels::matmul_nt_acc(g, tp.value(b), tp.grad(a));
    if (tp.needs_grad(b)) kernels::matmul_tn_acc(tp.value(a), g, tp.grad(b));
  });
}

/// a·bᵀ, used for the tied output projection.
template <typename T>
Var matmul_nt(Tape<T>& t, Var a, Var b) {
  Matrix<T> c;
  kernels::matmul_nt(t.value(a), t.value(b), c);
  return t.push(std::move(c), {a, b}, [a, b, self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(a)) kernels::matmul_acc(g, tp.value(b), tp.grad(a));
    if (tp.needs_grad(b)) kernels::matmul_tn_acc(g, tp.value(a), tp.grad(b));
  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  const Matrix<T>& av = t.value(a);
  const Matrix<T>& bv = t.value(b);
  require(av.same_shape(bv), "add: shape mismatch");
  Matrix<T> c = av;
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += bv.data[i];
  return t.push(std::move(c), {a, b}, [a, b, self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    for (Var in : {a, b}) {
      if (!tp.needs_grad(in)) continue;
      auto& d = tp.grad(in).data;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data[i];
    }
  });
}

/// x + broadcast(bias) with bias 1×cols.
template <typename T>
Var add_bias(Tape<T>& t, Var x, Var bias) {
  Matrix<T> y = t.value(x);
  require(t.value(bias).size() == y.cols, "add_bias: width mismatch");
  kernels::add_row_bias(y, t.value(bias));
  return t.push(std::move(y), {x, bias}, [x, bias, self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(x)) {
      auto& d = tp.grad(x).data;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data[i];
    }
    if (tp.needs_grad(bias)) {
      auto& d = tp.grad(bias).data;
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) d[j] += g(i, j);
    }
  });
}

/// Selects rows of `table` by index (embedding lookup).
template <typename T>
Var gather_rows(Tape<T>& t, Var table, std::vector<int> ids) {
  const Matrix<T>& tv = t.value(table);
  Matrix<T> y(ids.size(), tv.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows)
      throw std::out_of_range("gather_rows: index " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(tv.rows));
    const auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  return t.push(std::move(y), {table},
                [table, ids = std::move(ids), self = Var{t.size()}](Tape<T>& tp) {
                  const Matrix<T>& g = tp.grad(self);
                  Matrix<T>& d = tp.grad(table);
                  for (std::size_t i = 0; i < ids.size(); ++i)
                    for (std::size_t j = 0; j < g.cols; ++j)
                      d(static_cast<std::size_t>(ids[i]), j) += g(i, j);
                });
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias) {
  Matrix<T> y;
  std::vector<T> mean, rstd;
  kernels::layer_norm(t.value(x), t.value(gain), t.value(bias), y, &mean, &rstd);
  return t.push(std::move(y), {x, gain, bias},
                [x, gain, bias, mean = std::move(mean), rstd = std::move(rstd),
                 self = Var{t.size()}](Tape<T>& tp) {
                  const Matrix<T>& g = tp.grad(self);
                  const Matrix<T>& xv = tp.value(x);
                  const Matrix<T>& gv = tp.value(gain);
                  const std::size_t d = xv.cols;
                  std::vector<T> xhat(d), dxhat(d);
                  for (std::size_t i = 0; i < xv.rows; ++i) {
                    T sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                      xhat[j] = (xv(i, j) - mean[i]) * rstd[i];
                      dxhat[j] = g(i, j) * gv.data[j];
                      sum_dxhat += dxhat[j];
                      sum_dxhat_xhat += dxhat[j] * xhat[j];
                    }
                    if (tp.needs_grad(gain)) {
                      auto& dg = tp.grad(gain).data;
                      for (std::size_t j = 0; j < d; ++j) dg[j] += g(i, j) * xhat[j];
                    }
                    if (tp.needs_grad(bias)) {
                      auto& db = tp.grad(bias).data;
                      for (std::size_t j = 0; j < d; ++j) db[j] += g(i, j);
                    }
                    if (tp.needs_grad(x)) {
                      Matrix<T>& dx = tp.grad(x);
                      const T inv_d = T(1) / static_cast<T>(d);
                      for (std::size_t j = 0; j < d; ++j)
                        dx(i, j) += rstd[i] * (dxhat[j] - inv_d * sum_dxhat -
                                               xhat[j] * inv_d * sum_dxhat_xhat);
                    }
                  }
                });
}

template <typename T>
Var gelu(Tape<T>& t, Var x) {
  Matrix<T> y = t.value(x);
  for (T& v : y.data) v = kernels::gelu(v);
  return t.push(std::move(y), {x}, [x, self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    const Matrix<T>& xv = tp.value(x);
    auto& d = tp.grad(x).data;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data[i] * kernels::gelu_grad(xv.data[i]);
  });
}

/// Inverted dropout; identity when rate is 0.
template <typename T>
Var dropout(Tape<T>& t, Var x, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  const Matrix<T>& xv = t.value(x);
  std::vector<T> mask(xv.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (T& m : mask) {
    const double u = static_cast<double>((*rng)() >> 11) * 0x1.0p-53;
    m = u < rate ? T(0) : keep_scale;
  }
  Matrix<T> y = xv;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= mask[i];
  return t.push(std::move(y), {x}, [x, mask = std::move(mask), self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    auto& d = tp.grad(x).data;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data[i] * mask[i];
  });
}

/// Multi-head attention core softmax(q·kᵀ/√dh)·v over `heads` heads.
/// With `causal`, query i only sees keys j ≤ i. `key_mask[j] == false` hides
/// key j from every query (source padding).
template <typename T>
Var attention(Tape<T>& t, Var q, Var k, Var v, std::size_t heads, bool causal,
              std::vector<bool> key_mask = {}) {
  const Matrix<T>& qv = t.value(q);
  const Matrix<T>& kv = t.value(k);
  const Matrix<T>& vv = t.value(v);
  require(qv.cols == kv.cols && kv.same_shape(vv), "attention: shape mismatch");
  require(heads > 0 && qv.cols % heads == 0, "attention: heads must divide width");
  const std::size_t n = qv.rows, m = kv.rows;
  const std::vector<bool>* mask = key_mask.empty() ? nullptr : &key_mask;
  Matrix<T> out(n, qv.cols);
  Matrix<T> probs(n, heads * m);
  for (std::size_t i = 0; i < n; ++i)
    kernels::attend_row<T>(qv.row(i), kv, vv, heads, causal ? i + 1 : m, mask,
                           out.row(i), probs.row(i));
  return t.push(std::move(out), {q, k, v},
                [q, k, v, heads, probs = std::move(probs), self = Var{t.size()}](Tape<T>& tp) {
                  const Matrix<T>& g = tp.grad(self);
                  const Matrix<T>& qv = tp.value(q);
                  const Matrix<T>& kv = tp.value(k);
                  const Matrix<T>& vv = tp.value(v);
                  const std::size_t n = qv.rows, m = kv.rows, d = qv.cols;
                  const std::size_t dh = d / heads;
                  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
                  Matrix<T>* dq = tp.needs_grad(q) ? &tp.grad(q) : nullptr;
                  Matrix<T>* dk = tp.needs_grad(k) ? &tp.grad(k) : nullptr;
                  Matrix<T>* dv = tp.needs_grad(v) ? &tp.grad(v) : nullptr;
                  std::vector<T> dp(m);
                  for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t h = 0; h < heads; ++h) {
                      const T* p = probs.data.data() + i * heads * m + h * m;
                      const std::size_t off = h * dh;
                      T dot = 0;
                      for (std::size_t j = 0; j < m; ++j) {
                        T s = 0;
                        if (p[j] != T(0))
                          for (std::size_t c = 0; c < dh; ++c) s += g(i, off + c) * vv(j, off + c);
                        dp[j] = s;
                        dot += s * p[j];
                        if (dv && p[j] != T(0))
                          for (std::size_t c = 0; c < dh; ++c) (*dv)(j, off + c) += p[j] * g(i, off + c);
                      }
                      for (std::size_t j = 0; j < m; ++j) {
                        if (p[j] == T(0)) continue;
                        const T ds = p[j] * (dp[j] - dot) * scale;
                        if (dq)
                          for (std::size_t c = 0; c < dh; ++c) (*dq)(i, off + c) += ds * kv(j, off + c);
                        if (dk)
                          for (std::size_t c = 0; c < dh; ++c) (*dk)(j, off + c) += ds * qv(i, off + c);
                      }
                    }
                  }
                });
}

template <typename T>
Var log_softmax(Tape<T>& t, Var x) {
  Matrix<T> y;
  kernels::log_softmax(t.value(x), y);
  return t.push(std::move(y), {x}, [x, self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    const Matrix<T>& yv = tp.value(self);
    Matrix<T>& dx = tp.grad(x);
    for (std::size_t i = 0; i < g.rows; ++i) {
      T gs = 0;
      for (std::size_t j = 0; j < g.cols; ++j) gs += g(i, j);
      for (std::size_t j = 0; j < g.cols; ++j)
        dx(i, j) += g(i, j) - static_cast<T>(std::exp(static_cast<double>(yv(i, j)))) * gs;
    }
  });
}

/// Last row of x as a 1×cols matrix.
template <typename T>
Var last_row(Tape<T>& t, Var x) {
  const Matrix<T>& xv = t.value(x);
  require(xv.rows > 0, "last_row: empty input");
  Matrix<T> y(1, xv.cols);
  const auto src = xv.row(xv.rows - 1);
  std::copy(src.begin(), src.end(), y.data.begin());
  return t.push(std::move(y), {x}, [x, self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    Matrix<T>& d = tp.grad(x);
    for (std::size_t j = 0; j < g.cols; ++j) d(d.rows - 1, j) += g.data[j];
  });
}

/// Sum of x[t, ids[t]] over rows, as a 1×1 node. Entries equal to `skip` are
/// excluded; pass a negative value to keep every row.
template <typename T>
Var pick_sum(Tape<T>& t, Var x, std::vector<int> ids, int skip = -1) {
  const Matrix<T>& xv = t.value(x);
  require(xv.rows == ids.size(), "pick_sum: length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == skip) continue;
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= xv.cols)
      throw std::out_of_range("pick_sum: id out of range");
    s += static_cast<double>(xv(i, static_cast<std::size_t>(ids[i])));
  }
  Matrix<T> y(1, 1, static_cast<T>(s));
  return t.push(std::move(y), {x}, [x, ids = std::move(ids), skip, self = Var{t.size()}](Tape<T>& tp) {
    const T g = tp.grad(self).data[0];
    Matrix<T>& d = tp.grad(x);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] != skip) d(i, static_cast<std::size_t>(ids[i])) += g;
  });
}

template <typename T>
Var scale(Tape<T>& t, Var x, double c) {
  Matrix<T> y = t.value(x);
  for (T& v : y.data) v = static_cast<T>(static_cast<double>(v) * c);
  return t.push(std::move(y), {x}, [x, c, self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    auto& d = tp.grad(x).data;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += static_cast<T>(static_cast<double>(g.data[i]) * c);
  });
}

/// Scalar a − b + c.
template <typename T>
Var sub_add_const(Tape<T>& t, Var a, Var b, double c) {
  const double y = static_cast<double>(scalar(t, a)) - static_cast<double>(scalar(t, b)) + c;
  return t.push(Matrix<T>(1, 1, static_cast<T>(y)), {a, b}, [a, b, self = Var{t.size()}](Tape<T>& tp) {
    const T g = tp.grad(self).data[0];
    if (tp.needs_grad(a)) tp.grad(a).data[0] += g;
    if (tp.needs_grad(b)) tp.grad(b).data[0] -= g;
  });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  Matrix<T> y = t.value(x);
  for (T& v : y.data) v = v > T(0) ? v : T(0);
  return t.push(std::move(y), {x}, [x, self = Var{t.size()}](Tape<T>& tp) {
    const Matrix<T>& g = tp.grad(self);
    const Matrix<T>& xv = tp.value(x);
    auto& d = tp.grad(x).data;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (xv.data[i] > T(0)) d[i] += g.data[i];
  });
}

/// Sum of 1×1 nodes; an empty list yields a constant zero.
template <typename T>
Var sum(Tape<T>& t, const std::vector<Var>& xs) {
  if (xs.empty()) return t.constant(Matrix<T>(1, 1));
  double s = 0;
  for (Var x : xs) s += static_cast<double>(scalar(t, x));
  return t.push(Matrix<T>(1, 1, static_cast<T>(s)), xs, [xs, self = Var{t.size()}](Tape<T>& tp) {
    const T g = tp.grad(self).data[0];
    for (Var x : xs)
      if (tp.needs_grad(x)) tp.grad(x).data[0] += g;
  });
}

}  // namespace ad
}  // namespace brio
