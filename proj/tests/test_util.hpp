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

// Shared fixtures and independent oracles for the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "brio/brio.hpp"
#include "brio/decode.hpp"
#include "brio/model.hpp"
#include "brio/rng.hpp"

namespace brio::testing {

/// A few-thousand-parameter model for gradient and decoder checks.
inline ModelConfig tiny_config(std::size_t vocab = 12, std::size_t max_len = 8) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.model_dim = 8;
  c.num_heads = 2;
  c.ffn_dim = 16;
  c.num_encoder_layers = 2;
  c.num_decoder_layers = 2;
  c.max_source_len = max_len;
  c.max_target_len = max_len;
  return c;
}

/// Regular (non-reserved) token ids.
inline std::vector<int> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<int> ids(n);
  for (int& id : ids)
    id = special::kCount + static_cast<int>(uniform_index(rng, vocab - special::kCount));
  return ids;
}

inline std::vector<int> framed(std::vector<int> body) {
  body.insert(body.begin(), special::kBos);
  body.push_back(special::kEos);
  return body;
}

// ---------------------------------------------------------------------------
// Finite differences

struct GradCheck {
  double worst = 0;       // largest per-array relative error
  std::string worst_name;
  double global = 0;      // relative error over all values at once
  std::size_t checked = 0;
  std::size_t zero_arrays = 0;  // arrays whose gradient is zero on both sides
};

// Arrays whose analytic and numeric gradients both fall below this norm are
// compared in absolute terms. Central differences carry round-off of roughly
// 1e-16·|loss|/eps per value, far below it; some arrays (attention key
// biases) have an exactly zero gradient, where a ratio of noise is meaningless.
inline constexpr double kGradZeroFloor = 1e-8;

/// Central differences on every parameter value. `loss(params, with_grad)`
/// must return the loss and, when asked, leave its gradient in params.
/// Per array: ||analytic − numeric|| / max(||analytic||, ||numeric||).
inline GradCheck finite_difference_check(
    ModelParams<double>& params, const std::function<double(ModelParams<double>&, bool)>& loss,
    double eps = 1e-4) {
  params.zero_grad();
  loss(params, true);
  GradCheck out;
  double all_diff = 0, all_a = 0, all_n = 0;
  for (auto& p : params.tensors()) {
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value.data[i];
      p.value.data[i] = orig + eps;
      const double up = loss(params, false);
      p.value.data[i] = orig - eps;
      const double down = loss(params, false);
      p.value.data[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = p.grad.data[i];
      diff += (analytic - numeric) * (analytic - numeric);
      na += analytic * analytic;
      nn += numeric * numeric;
      ++out.checked;
    }
    all_diff += diff, all_a += na, all_n += nn;
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    if (scale < kGradZeroFloor) ++out.zero_arrays;
    const double rel = scale < kGradZeroFloor ? std::sqrt(diff) : std::sqrt(diff) / scale;
    if (rel > out.worst) out.worst = rel, out.worst_name = p.name;
  }
  out.global = std::sqrt(all_diff) / std::max(std::sqrt(all_a), std::sqrt(all_n));
  params.zero_grad();
  return out;
}

// ---------------------------------------------------------------------------
// Step models with hand-set distributions

/// Next-token log-probabilities given by an arbitrary function of the prefix.
class TableModel {
 public:
  using Fn = std::function<std::vector<double>(const std::vector<int>&)>;

  struct State {
    std::vector<int> prefix;
    std::vector<double> lp;
  };

  TableModel(std::size_t vocab, Fn fn) : vocab_(vocab), fn_(std::move(fn)) {}

  State start() const { return make({special::kBos}); }
  State advance(const State& s, int tok) const {
    auto p = s.prefix;
    p.push_back(tok);
    return make(std::move(p));
  }
  std::span<const double> log_probs(const State& s) const { return s.lp; }
  std::size_t vocab_size() const { return vocab_; }

 private:
  State make(std::vector<int> prefix) const {
    State s{std::move(prefix), {}};
    s.lp = fn_(s.prefix);
    return s;
  }
  std::size_t vocab_;
  Fn fn_;
};

inline std::vector<double> log_softmax(const std::vector<double>& logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double l : logits) z += std::exp(l - m);
  std::vector<double> out;
  for (double l : logits) out.push_back(l - m - std::log(z));
  return out;
}

/// Random model: each distinct prefix gets its own random logits.
inline TableModel random_table_model(std::size_t vocab, std::uint64_t seed, double temperature = 2.0) {
  return TableModel(vocab, [vocab, seed, temperature](const std::vector<int>& prefix) {
    std::uint64_t h = seed;
    for (int t : prefix) h = splitmix64(h ^ static_cast<std::uint64_t>(t + 1));
    Rng rng(h);
    std::vector<double> logits(vocab);
    for (double& l : logits) l = temperature * (2 * uniform01(rng) - 1);
    return log_softmax(logits);
  });
}

struct Enumerated {
  std::vector<int> tokens;
  double log_prob;
};

/// Every terminal sequence (EOS-ended or at the length cap) with its exact
/// log-probability.
template <StepModel M>
std::vector<Enumerated> enumerate_sequences(const M& model, std::size_t max_len) {
  std::vector<Enumerated> out;
  std::function<void(const typename M::State&, std::vector<int>&, double)> rec =
      [&](const typename M::State& s, std::vector<int>& toks, double lp) {
        const auto dist = model.log_probs(s);
        for (std::size_t t = 0; t < dist.size(); ++t) {
          toks.push_back(static_cast<int>(t));
          const double l = lp + dist[t];
          if (static_cast<int>(t) == special::kEos || toks.size() >= max_len)
            out.push_back({toks, l});
          else
            rec(model.advance(s, static_cast<int>(t)), toks, l);
          toks.pop_back();
        }
      };
  std::vector<int> toks{special::kBos};
  rec(model.start(), toks, 0.0);
  return out;
}

inline void rank_enumerated(std::vector<Enumerated>& seqs, double alpha) {
  std::stable_sort(seqs.begin(), seqs.end(), [alpha](const Enumerated& a, const Enumerated& b) {
    return a.log_prob / length_normalizer(a.tokens.size() - 1, alpha) >
           b.log_prob / length_normalizer(b.tokens.size() - 1, alpha);
  });
}

// ---------------------------------------------------------------------------
// Corpora

/// Lead-copy documents over a small alphabet: summary = first sentence.
inline std::vector<Document> copy_corpus(std::size_t n, std::uint64_t seed,
                                         std::size_t alphabet = 8) {
  Rng rng = make_rng(seed, 99);
  std::vector<Document> docs;
  for (std::size_t d = 0; d < n; ++d) {
    auto sentence = [&] {
      std::string s;
      const std::size_t len = 2 + uniform_index(rng, 3);
      for (std::size_t i = 0; i < len; ++i)
        s += "w" + std::to_string(uniform_index(rng, alphabet)) + " ";
      return s + ".";
    };
    const std::string lead = sentence();
    docs.push_back({"d" + std::to_string(d), lead + " " + sentence(), lead, std::nullopt});
  }
  return docs;
}

}  // namespace brio::testing
