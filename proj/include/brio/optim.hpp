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
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "brio/model.hpp"

namespace brio {

enum class OptimizerKind { kAdam, kAdafactor };

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adafactor without relative step sizing or parameter scaling: the learning
// rate is used as given.
struct AdafactorHyper {
  double decay_rate = -0.8;  // beta2_t = 1 - t^decay_rate
  double eps1 = 1e-30;
  double clip_threshold = 1.0;
};

/// Per-parameter optimizer accumulators, all in 64-bit.
struct OptimizerSlot {
  std::size_t rows = 0, cols = 0;
  std::vector<double> m, v;         // Adam moments; Adafactor unfactored second moment
  std::vector<double> row, col;     // Adafactor factored second moment
  bool factored = false;
};

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  std::uint64_t step = 0;
  AdamHyper adam;
  AdafactorHyper adafactor;
  std::vector<OptimizerSlot> slots;
};

template <typename T>
OptimizerState make_optimizer(OptimizerKind kind, const ModelParams<T>& params) {
  OptimizerState s;
  s.kind = kind;
  for (const auto& p : params.tensors()) {
    OptimizerSlot slot;
    slot.rows = p.value.rows;
    slot.cols = p.value.cols;
    if (kind == OptimizerKind::kAdam) {
      slot.m.assign(p.value.size(), 0.0);
      slot.v.assign(p.value.size(), 0.0);
    } else if (slot.rows > 1 && slot.cols > 1) {
      slot.factored = true;
      slot.row.assign(slot.rows, 0.0);
      slot.col.assign(slot.cols, 0.0);
    } else {
      slot.v.assign(p.value.size(), 0.0);
    }
    s.slots.push_back(std::move(slot));
  }
  return s;
}

namespace detail {

template <typename T>
void adam_update(Parameter<T>& p, OptimizerSlot& s, const AdamHyper& h, std::uint64_t t,
                 double lr) {
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = static_cast<double>(p.grad.data[i]);
    s.m[i] = h.beta1 * s.m[i] + (1.0 - h.beta1) * g;
    s.v[i] = h.beta2 * s.v[i] + (1.0 - h.beta2) * g * g;
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    p.value.data[i] =
        static_cast<T>(static_cast<double>(p.value.data[i]) - lr * mhat / (std::sqrt(vhat) + h.eps));
  }
}

template <typename T>
void adafactor_update(Parameter<T>& p, OptimizerSlot& s, const AdafactorHyper& h,
                      std::uint64_t t, double lr) {
  const double beta2t = 1.0 - std::pow(static_cast<double>(t), h.decay_rate);
  const std::size_t n = p.value.size();
  std::vector<double> u(n);
  if (s.factored) {
    const std::size_t R = s.rows, C = s.cols;
    std::vector<double> row_mean(R, 0.0), col_mean(C, 0.0);
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        const double g = static_cast<double>(p.grad.data[i * C + j]);
        const double g2 = g * g + h.eps1;
        row_mean[i] += g2;
        col_mean[j] += g2;
      }
    for (std::size_t i = 0; i < R; ++i)
      s.row[i] = beta2t * s.row[i] + (1.0 - beta2t) * row_mean[i] / static_cast<double>(C);
    for (std::size_t j = 0; j < C; ++j)
      s.col[j] = beta2t * s.col[j] + (1.0 - beta2t) * col_mean[j] / static_cast<double>(R);
    double row_avg = 0;
    for (double r : s.row) row_avg += r;
    row_avg /= static_cast<double>(R);
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        const double vhat = s.row[i] * s.col[j] / row_avg;
        u[i * C + j] = static_cast<double>(p.grad.data[i * C + j]) / std::sqrt(vhat);
      }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double g = static_cast<double>(p.grad.data[i]);
      s.v[i] = beta2t * s.v[i] + (1.0 - beta2t) * (g * g + h.eps1);
      u[i] = g / std::sqrt(s.v[i]);
    }
  }
  double ms = 0;
  for (double x : u) ms += x * x;
  const double rms = std::sqrt(ms / static_cast<double>(n));
  const double denom = std::max(1.0, rms / h.clip_threshold);
  for (std::size_t i = 0; i < n; ++i)
    p.value.data[i] = static_cast<T>(static_cast<double>(p.value.data[i]) - lr * u[i] / denom);
}

}  // namespace detail

/// Applies one update from the accumulated gradients, then clears them.
template <typename T>
void optimizer_step(ModelParams<T>& params, OptimizerState& state, double learning_rate) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer_step: learning rate must be > 0");
  auto& tensors = params.tensors();
  if (state.slots.size() != tensors.size())
    throw std::logic_error("optimizer_step: optimizer state was not initialized for these parameters");
  for (std::size_t k = 0; k < tensors.size(); ++k)
    if (state.slots[k].rows != tensors[k].value.rows || state.slots[k].cols != tensors[k].value.cols)
      throw std::logic_error("optimizer_step: state shape mismatch for " + tensors[k].name);
  ++state.step;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (state.kind == OptimizerKind::kAdam)
      detail::adam_update(tensors[k], state.slots[k], state.adam, state.step, learning_rate);
    else
      detail::adafactor_update(tensors[k], state.slots[k], state.adafactor, state.step, learning_rate);
  }
  params.zero_grad();
}

/// Linear warmup to `base_lr` over `warmup_steps`, constant afterwards.
inline double warmup_schedule(double base_lr, std::uint64_t step, std::uint64_t warmup_steps) {
  if (warmup_steps == 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

/// Warmup actually used for a run: capped at a tenth of the planned steps.
inline std::uint64_t effective_warmup(std::uint64_t configured, std::uint64_t total_steps) {
  return std::min(configured, total_steps / 10);
}

}  // namespace brio
