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
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "brio/corpus.hpp"
#include "brio/model.hpp"

namespace brio {

struct DecodeConfig {
  std::size_t num_beams = 6;
  std::size_t num_beam_groups = 6;
  double diversity_penalty = 1.0;
  std::size_t max_decode_len = 64;
  double length_penalty = 1.0;

  bool operator==(const DecodeConfig&) const = default;

  void validate() const {
    auto check = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("invalid decode config: ") + what);
    };
    check(num_beams >= 1, "num_beams must be >= 1");
    check(num_beam_groups >= 1, "num_beam_groups must be >= 1");
    check(num_beam_groups <= num_beams, "num_beam_groups must not exceed num_beams");
    check(num_beams % num_beam_groups == 0, "num_beams must be divisible by num_beam_groups");
    check(diversity_penalty >= 0.0, "diversity_penalty must be >= 0");
    check(max_decode_len >= 2, "max_decode_len must be >= 2");
    check(length_penalty >= 0.0, "length_penalty must be >= 0");
  }
};

struct Hypothesis {
  std::vector<int> tokens;  // BOS-prefixed
  double log_prob = 0;      // sum of model log-probabilities of tokens[1..]
  double score = 0;         // search objective: log_prob minus diversity penalties
  bool finished = false;    // EOS emitted
  std::size_t group = 0;

  /// Search score divided by |S|^alpha, |S| = number of generated tokens.
  double penalized(double alpha) const {
    return score / length_normalizer(tokens.size() - 1, alpha);
  }

  bool operator==(const Hypothesis&) const = default;
};

/// Anything that yields next-token log-probabilities for a growing prefix.
template <typename M>
concept StepModel = requires(const M& m, const typename M::State& s, int tok) {
  { m.start() } -> std::same_as<typename M::State>;
  { m.advance(s, tok) } -> std::same_as<typename M::State>;
  { m.log_probs(s) } -> std::convertible_to<std::span<const double>>;
  { m.vocab_size() } -> std::convertible_to<std::size_t>;
};

/// Argmax decoding; ties go to the lowest token id.
template <StepModel M>
Hypothesis greedy_decode(const M& model, std::size_t max_len) {
  if (max_len < 2) throw std::invalid_argument("greedy_decode: max_len must be >= 2");
  Hypothesis h;
  h.tokens = {special::kBos};
  auto state = model.start();
  while (h.tokens.size() < max_len) {
    const std::span<const double> lp = model.log_probs(state);
    std::size_t best = 0;
    for (std::size_t t = 1; t < lp.size(); ++t)
      if (lp[t] > lp[best]) best = t;
    h.tokens.push_back(static_cast<int>(best));
    h.log_prob += lp[best];
    h.score = h.log_prob;
    if (static_cast<int>(best) == special::kEos) {
      h.finished = true;
      break;
    }
    if (h.tokens.size() < max_len) state = model.advance(state, static_cast<int>(best));
  }
  return h;
}

namespace detail {

template <typename State>
struct Beam {
  Hypothesis hyp;
  State state;
};

struct Expansion {
  double score;
  std::size_t beam;
  int token;
};

inline bool expansion_before(const Expansion& a, const Expansion& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.beam != b.beam) return a.beam < b.beam;
  return a.token < b.token;
}

/// One timestep of beam search for a single group. Slots taken by finished
/// hypotheses are not refilled. `counts` holds how often earlier groups chose
/// each token at this timestep; the selections made here are added to it.
template <StepModel M>
void expand_group(const M& model, std::vector<Beam<typename M::State>>& active,
                  std::vector<Hypothesis>& done, std::size_t width, double penalty,
                  std::vector<double>& counts, std::size_t max_len) {
  if (active.empty() || done.size() >= width) {
    active.clear();
    return;
  }
  std::vector<Expansion> cands;
  for (std::size_t b = 0; b < active.size(); ++b) {
    const std::span<const double> lp = model.log_probs(active[b].state);
    for (std::size_t t = 0; t < lp.size(); ++t)
      cands.push_back({active[b].hyp.score + (lp[t] - penalty * counts[t]), b, static_cast<int>(t)});
  }
  const std::size_t keep = std::min(width - done.size(), cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                    expansion_before);
  std::vector<Beam<typename M::State>> next;
  for (std::size_t k = 0; k < keep; ++k) {
    const Expansion& e = cands[k];
    const Beam<typename M::State>& src = active[e.beam];
    Hypothesis h = src.hyp;
    h.tokens.push_back(e.token);
    h.log_prob += model.log_probs(src.state)[static_cast<std::size_t>(e.token)];
    h.score = e.score;
    counts[static_cast<std::size_t>(e.token)] += 1.0;
    if (e.token == special::kEos) {
      h.finished = true;
      done.push_back(std::move(h));
    } else if (h.tokens.size() >= max_len) {
      done.push_back(std::move(h));  // length-capped
    } else {
      next.push_back({std::move(h), model.advance(src.state, e.token)});
    }
  }
  active = std::move(next);
}

inline void rank_group(std::vector<Hypothesis>& hyps, double alpha) {
  std::stable_sort(hyps.begin(), hyps.end(), [alpha](const Hypothesis& a, const Hypothesis& b) {
    return a.penalized(alpha) > b.penalized(alpha);
  });
}

}  // namespace detail

/// Group-wise beam search with Hamming diversity. Groups are decoded in order
/// at every timestep; a token's log-probability is lowered by
/// `diversity_penalty` for each time an earlier group picked it at the same
/// step. Returns each group's hypotheses ranked by penalized score, groups in
/// order.
template <StepModel M>
std::vector<Hypothesis> diverse_beam_search(const M& model, const DecodeConfig& cfg) {
  cfg.validate();
  const std::size_t groups = cfg.num_beam_groups;
  const std::size_t width = cfg.num_beams / groups;
  using State = typename M::State;
  std::vector<std::vector<detail::Beam<State>>> active(groups);
  std::vector<std::vector<Hypothesis>> done(groups);
  const State start = model.start();
  for (std::size_t g = 0; g < groups; ++g) {
    Hypothesis h;
    h.tokens = {special::kBos};
    h.group = g;
    active[g].push_back({std::move(h), start});
  }
  std::vector<double> counts(model.vocab_size());
  for (std::size_t len = 1; len < cfg.max_decode_len; ++len) {
    bool any = false;
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t g = 0; g < groups; ++g) {
      detail::expand_group(model, active[g], done[g], width, cfg.diversity_penalty, counts,
                           cfg.max_decode_len);
      any = any || !active[g].empty();
    }
    if (!any) break;
  }
  std::vector<Hypothesis> out;
  for (std::size_t g = 0; g < groups; ++g) {
    detail::rank_group(done[g], cfg.length_penalty);
    out.insert(out.end(), done[g].begin(), done[g].end());
  }
  return out;
}

/// Standard beam search: keeps the `num_beams` best partial hypotheses per
/// step and returns the finished ones ranked by score/|S|^alpha.
template <StepModel M>
std::vector<Hypothesis> beam_search(const M& model, const DecodeConfig& cfg) {
  cfg.validate();
  if (cfg.num_beam_groups != 1)
    throw std::invalid_argument("beam_search: num_beam_groups must be 1 (use diverse_beam_search)");
  using State = typename M::State;
  Hypothesis root;
  root.tokens = {special::kBos};
  std::vector<detail::Beam<State>> active{{root, model.start()}};
  std::vector<Hypothesis> done;
  std::vector<double> counts(model.vocab_size());
  for (std::size_t len = 1; len < cfg.max_decode_len && !active.empty(); ++len)
    detail::expand_group(model, active, done, cfg.num_beams, 0.0, counts, cfg.max_decode_len);
  detail::rank_group(done, cfg.length_penalty);
  return done;
}

namespace detail {

inline void check_decode_len(std::size_t max_decode_len, const ModelConfig& mc) {
  if (max_decode_len > mc.max_target_len)
    throw std::invalid_argument("max_decode_len " + std::to_string(max_decode_len) +
                                " exceeds the model's max_target_len " +
                                std::to_string(mc.max_target_len));
}

}  // namespace detail

template <typename T>
Hypothesis greedy_decode(const ModelParams<T>& params, std::span<const int> source,
                         const DecodeConfig& cfg) {
  detail::check_decode_len(cfg.max_decode_len, params.config());
  return greedy_decode(DecoderSession<T>(params, source), cfg.max_decode_len);
}

template <typename T>
std::vector<Hypothesis> beam_search(const ModelParams<T>& params, std::span<const int> source,
                                    const DecodeConfig& cfg) {
  detail::check_decode_len(cfg.max_decode_len, params.config());
  return beam_search(DecoderSession<T>(params, source), cfg);
}

template <typename T>
std::vector<Hypothesis> diverse_beam_search(const ModelParams<T>& params,
                                            std::span<const int> source, const DecodeConfig& cfg) {
  detail::check_decode_len(cfg.max_decode_len, params.config());
  return diverse_beam_search(DecoderSession<T>(params, source), cfg);
}

}  // namespace brio
