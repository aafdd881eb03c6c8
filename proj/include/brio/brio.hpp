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
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "brio/autodiff.hpp"
#include "brio/corpus.hpp"
#include "brio/decode.hpp"
#include "brio/evaluate.hpp"
#include "brio/model.hpp"
#include "brio/optim.hpp"
#include "brio/parallel.hpp"
#include "brio/rng.hpp"
#include "brio/rouge.hpp"

namespace brio {

struct CandSum {
  std::string doc_id;
  std::vector<int> tokens;  // BOS-prefixed decoder output
  std::string text;
  double model_score = 0;   // length-penalized log-probability f(S)
  rouge::RougeTriple rouge;
  double quality = 0;
  std::size_t generation_index = 0;

  bool operator==(const CandSum&) const = default;
};

struct RankedCandidateSet {
  std::string doc_id;
  std::vector<CandSum> candidates;  // quality descending
  std::vector<int> source_ids;
  std::vector<int> reference_ids;   // BOS ... EOS

  bool operator==(const RankedCandidateSet&) const = default;
};

struct FinetuneConfig {
  std::size_t batch_size = 4;
  std::size_t epochs = 5;
  double learning_rate = 1e-5;
  std::uint64_t warmup_steps = 20000;

  bool operator==(const FinetuneConfig&) const = default;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("invalid finetune config: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("invalid finetune config: epochs must be >= 1");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("invalid finetune config: learning_rate must be > 0");
  }
};

struct BrioConfig {
  std::size_t num_candidates = 6;
  DecodeConfig decode;
  double margin = 0.001;          // lambda
  double length_penalty = 1.0;    // alpha
  double ctr_weight = 10.0;       // gamma
  double mle_weight = 1.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 1;
  std::size_t loop_iterations = 2;
  std::size_t batch_size = 4;
  bool restart_from_finetuned = false;

  bool operator==(const BrioConfig&) const = default;

  void validate() const {
    decode.validate();
    auto check = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("invalid brio config: ") + what);
    };
    auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    check(num_candidates >= 2, "num_candidates must be >= 2");
    check(num_candidates <= decode.num_beams, "num_candidates must not exceed decode.num_beams");
    check(nonneg(margin), "margin must be finite and >= 0");
    check(nonneg(length_penalty), "length_penalty must be finite and >= 0");
    check(nonneg(ctr_weight), "ctr_weight must be finite and >= 0");
    check(nonneg(mle_weight), "mle_weight must be finite and >= 0");
    check(std::isfinite(learning_rate) && learning_rate > 0, "learning_rate must be > 0");
    check(epochs >= 1, "epochs must be >= 1");
    check(batch_size >= 1, "batch_size must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Candidate generation and ranking

/// Orders by quality, then model score, then generation index (all stable).
inline void sort_candidates(std::vector<CandSum>& c) {
  std::sort(c.begin(), c.end(), [](const CandSum& a, const CandSum& b) {
    if (a.quality != b.quality) return a.quality > b.quality;
    if (a.model_score != b.model_score) return a.model_score > b.model_score;
    return a.generation_index < b.generation_index;
  });
}

inline bool is_ranked(const std::vector<CandSum>& c) {
  for (std::size_t i = 1; i < c.size(); ++i) {
    const CandSum& a = c[i - 1];
    const CandSum& b = c[i];
    if (a.quality < b.quality) return false;
    if (a.quality == b.quality && a.model_score < b.model_score) return false;
    if (a.quality == b.quality && a.model_score == b.model_score &&
        a.generation_index > b.generation_index)
      return false;
  }
  return true;
}

/// Scores an already-decoded token sequence as a candidate for `ex`.
inline CandSum make_candidate(const TokenizedExample& ex, const Vocabulary& vocab,
                              std::vector<int> tokens, double model_score, std::size_t index) {
  CandSum c;
  c.doc_id = ex.doc_id;
  c.text = decode_tokens(tokens, vocab);
  c.rouge = rouge::rouge_triple(id_tokens(tokens, vocab), ex.reference_tokens);
  c.quality = rouge::quality_score(c.rouge);
  c.tokens = std::move(tokens);
  c.model_score = model_score;
  c.generation_index = index;
  return c;
}

/// Diverse beam search, exact-duplicate removal, then the first N unique
/// hypotheses in group order scored against the reference and ranked.
template <typename T>
RankedCandidateSet generate_candidates(const ModelParams<T>& params, const TokenizedExample& ex,
                                       const Vocabulary& vocab, const BrioConfig& cfg) {
  const auto hyps = diverse_beam_search(params, ex.source_ids, cfg.decode);
  if (hyps.empty()) throw std::logic_error("generate_candidates: decoder returned no hypotheses");
  RankedCandidateSet set;
  set.doc_id = ex.doc_id;
  set.source_ids = ex.source_ids;
  set.reference_ids = ex.target_ids;
  std::set<std::vector<int>> seen;
  for (const Hypothesis& h : hyps) {
    if (set.candidates.size() >= cfg.num_candidates) break;
    if (!seen.insert(h.tokens).second) continue;
    const double f = h.log_prob / length_normalizer(h.tokens.size() - 1, cfg.length_penalty);
    set.candidates.push_back(make_candidate(ex, vocab, h.tokens, f, set.candidates.size()));
  }
  sort_candidates(set.candidates);
  return set;
}

template <typename T>
std::vector<RankedCandidateSet> generate_candidate_sets(const ModelParams<T>& params,
                                                        const std::vector<TokenizedExample>& examples,
                                                        const Vocabulary& vocab,
                                                        const BrioConfig& cfg,
                                                        std::size_t threads = 1) {
  std::vector<RankedCandidateSet> out(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    out[i] = generate_candidates(params, examples[i], vocab, cfg);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Losses

/// sum_{i<j} max(0, f(S_j) - f(S_i) + (j - i)·margin), scores in quality order.
inline double contrastive_loss(std::span<const double> scores, double margin) {
  double loss = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = i + 1; j < scores.size(); ++j)
      loss += std::max(0.0, scores[j] - scores[i] + static_cast<double>(j - i) * margin);
  return loss;
}

inline double contrastive_loss(const RankedCandidateSet& ranked, std::span<const double> scores,
                               double margin) {
  if (scores.size() != ranked.candidates.size())
    throw std::invalid_argument("contrastive_loss: " + std::to_string(scores.size()) +
                                " scores for " + std::to_string(ranked.candidates.size()) +
                                " candidates");
  return contrastive_loss(scores, margin);
}

template <typename T>
ad::Var contrastive_loss(ad::Tape<T>& tape, const std::vector<ad::Var>& scores, double margin) {
  std::vector<ad::Var> terms;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = i + 1; j < scores.size(); ++j)
      terms.push_back(ad::relu(
          tape, ad::sub_add_const(tape, scores[j], scores[i], static_cast<double>(j - i) * margin)));
  return ad::sum(tape, terms);
}

struct BrioLossParts {
  ad::Var total;
  double mle = 0;
  double contrastive = 0;
  bool has_ranking = false;
};

/// mle_weight·MLE(reference) + ctr_weight·contrastive(candidate scores), on
/// one shared encoder pass. Sets with fewer than two candidates contribute
/// the MLE term only.
template <typename T, typename P>
BrioLossParts brio_loss(GraphBuilder<T, P>& g, const RankedCandidateSet& ranked,
                        const BrioConfig& cfg) {
  auto& tape = g.tape();
  ad::Var memory = g.encode(ranked.source_ids);
  ad::Var lp = g.decode(memory, ranked.source_ids, decoder_input(ranked.reference_ids));
  ad::Var mle = mle_loss(tape, lp, decoder_gold(ranked.reference_ids));
  BrioLossParts out;
  out.mle = static_cast<double>(ad::scalar(tape, mle));
  std::vector<ad::Var> terms{ad::scale(tape, mle, cfg.mle_weight)};
  if (ranked.candidates.size() >= 2) {
    std::vector<ad::Var> scores;
    for (const CandSum& c : ranked.candidates)
      scores.push_back(sequence_score(g, memory, ranked.source_ids, c.tokens, cfg.length_penalty));
    ad::Var ctr = contrastive_loss(tape, scores, cfg.margin);
    out.contrastive = static_cast<double>(ad::scalar(tape, ctr));
    out.has_ranking = true;
    terms.push_back(ad::scale(tape, ctr, cfg.ctr_weight));
  }
  out.total = ad::sum(tape, terms);
  return out;
}

template <typename T>
double brio_loss(const ModelParams<T>& params, const RankedCandidateSet& ranked,
                 const BrioConfig& cfg) {
  ad::Tape<T> tape(false);
  GraphBuilder<T, const ModelParams<T>> g(tape, params);
  return static_cast<double>(ad::scalar(tape, brio_loss(g, ranked, cfg).total));
}

/// f(S) of every candidate in `set` under `params`, in set order.
template <typename T>
std::vector<double> score_candidates(const ModelParams<T>& params, const RankedCandidateSet& set,
                                     double alpha) {
  ad::Tape<T> tape(false);
  GraphBuilder<T, const ModelParams<T>> g(tape, params);
  ad::Var memory = g.encode(set.source_ids);
  std::vector<double> out;
  for (const CandSum& c : set.candidates)
    out.push_back(static_cast<double>(
        ad::scalar(tape, sequence_score(g, memory, set.source_ids, c.tokens, alpha))));
  return out;
}

// ---------------------------------------------------------------------------
// Ranking agreement

/// Kendall tau-b; empty when either side is constant.
inline std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("kendall_tau: length mismatch");
  double concordant = 0, discordant = 0, ties_x = 0, ties_y = 0, pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      pairs += 1;
      if (dx == 0) ties_x += 1;
      if (dy == 0) ties_y += 1;
      if (dx == 0 || dy == 0) continue;
      if ((dx > 0) == (dy > 0)) concordant += 1;
      else discordant += 1;
    }
  const double denom = std::sqrt((pairs - ties_x) * (pairs - ties_y));
  if (denom == 0) return std::nullopt;
  return (concordant - discordant) / denom;
}

struct TauSummary {
  double mean = 0;
  std::size_t sets = 0;  // sets where tau is defined
};

/// Mean Kendall tau between model scores under `params` and candidate quality.
template <typename T>
TauSummary mean_kendall_tau(const ModelParams<T>& params, const std::vector<RankedCandidateSet>& sets,
                            double alpha, std::size_t threads = 1) {
  std::vector<std::optional<double>> taus(sets.size());
  parallel_for(sets.size(), threads, [&](std::size_t i) {
    const auto scores = score_candidates(params, sets[i], alpha);
    std::vector<double> quality;
    for (const auto& c : sets[i].candidates) quality.push_back(c.quality);
    taus[i] = kendall_tau(scores, quality);
  });
  TauSummary s;
  for (const auto& t : taus)
    if (t) s.mean += *t, ++s.sets;
  if (s.sets) s.mean /= static_cast<double>(s.sets);
  return s;
}

// ---------------------------------------------------------------------------
// Training stages

struct StepRecord {
  std::string stage;
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double learning_rate = 0;
  double loss = 0;
  double mle = 0;
  double contrastive = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_quality = 0;
};

/// [begin, end) ranges of consecutive batches; the last may be short.
inline std::vector<std::pair<std::size_t, std::size_t>> make_batches(std::size_t n,
                                                                     std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
  return out;
}

/// Visiting order for one epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(seed, 1000 + epoch);
  shuffle(order, rng);
  return order;
}

template <typename T>
struct FinetuneResult {
  ModelParams<T> params;  // best epoch by validation quality
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_quality = -1;
};

/// MLE fine-tuning with Adam and linear warmup; keeps the epoch with the best
/// mean validation quality of greedy decodes.
template <typename T>
FinetuneResult<T> finetune_stage(ModelParams<T> params, const std::vector<TokenizedExample>& train,
                                 const std::vector<TokenizedExample>& val, const Vocabulary& vocab,
                                 const FinetuneConfig& cfg, const DecodeConfig& decode,
                                 std::uint64_t seed, std::size_t threads = 1) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("finetune_stage: empty training split");
  if (val.empty()) throw std::invalid_argument("finetune_stage: empty validation split");
  const auto batches = make_batches(train.size(), cfg.batch_size);
  const std::uint64_t total = cfg.epochs * batches.size();
  const std::uint64_t warmup = effective_warmup(cfg.warmup_steps, total);
  OptimizerState opt = make_optimizer(OptimizerKind::kAdam, params);
  FinetuneResult<T> result{params, {}, {}, 0, -1};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), seed, epoch);
    double epoch_loss = 0;
    for (const auto& [b, e] : batches) {
      double batch_loss = 0;
      const double inv = 1.0 / static_cast<double>(e - b);
      Rng drop_rng = make_rng(seed, 1'000'000 + opt.step);
      for (std::size_t k = b; k < e; ++k) {
        const TokenizedExample& ex = train[order[k]];
        ad::Tape<T> tape;
        GraphBuilder<T, ModelParams<T>> g(tape, params, {&drop_rng});
        ad::Var mem = g.encode(ex.source_ids);
        ad::Var lp = g.decode(mem, ex.source_ids, decoder_input(ex.target_ids));
        ad::Var loss = mle_loss(tape, lp, decoder_gold(ex.target_ids));
        tape.backward(ad::scale(tape, loss, inv));
        batch_loss += static_cast<double>(ad::scalar(tape, loss)) * inv;
      }
      const double lr = warmup_schedule(cfg.learning_rate, opt.step + 1, warmup);
      optimizer_step(params, opt, lr);
      result.steps.push_back({"finetune", epoch, opt.step, lr, batch_loss, batch_loss, 0.0});
      epoch_loss += batch_loss;
    }
    const double q = evaluate(params, val, vocab, decode, threads).mean_quality;
    result.epochs.push_back({epoch, epoch_loss / static_cast<double>(batches.size()), q});
    if (q > result.best_val_quality) {
      result.best_val_quality = q;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  return result;
}

template <typename T>
struct BrioStageResult {
  ModelParams<T> params;
  std::vector<StepRecord> steps;
  std::size_t mle_only_documents = 0;  // sets with fewer than two candidates
};

/// Minimizes brio_loss with Adafactor over every candidate set.
template <typename T>
BrioStageResult<T> brio_train_stage(ModelParams<T> params, const std::vector<RankedCandidateSet>& sets,
                                    const BrioConfig& cfg, std::uint64_t seed,
                                    const std::string& stage_name = "brio") {
  cfg.validate();
  if (sets.empty()) throw std::invalid_argument("brio_train_stage: no candidate sets");
  BrioStageResult<T> result;
  for (const auto& s : sets) result.mle_only_documents += s.candidates.size() < 2;
  const auto batches = make_batches(sets.size(), cfg.batch_size);
  OptimizerState opt = make_optimizer(OptimizerKind::kAdafactor, params);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(sets.size(), seed, epoch);
    for (const auto& [b, e] : batches) {
      StepRecord rec{stage_name, epoch, 0, cfg.learning_rate, 0, 0, 0};
      const double inv = 1.0 / static_cast<double>(e - b);
      Rng drop_rng = make_rng(seed, 1'000'000 + opt.step);
      for (std::size_t k = b; k < e; ++k) {
        ad::Tape<T> tape;
        GraphBuilder<T, ModelParams<T>> g(tape, params, {&drop_rng});
        const BrioLossParts parts = brio_loss(g, sets[order[k]], cfg);
        tape.backward(ad::scale(tape, parts.total, inv));
        rec.loss += static_cast<double>(ad::scalar(tape, parts.total)) * inv;
        rec.mle += parts.mle * inv;
        rec.contrastive += parts.contrastive * inv;
      }
      optimizer_step(params, opt, cfg.learning_rate);
      rec.step = opt.step;
      result.steps.push_back(rec);
    }
  }
  result.params = std::move(params);
  return result;
}

// ---------------------------------------------------------------------------
// Loop

struct LoopData {
  std::vector<TokenizedExample> train;
  std::vector<TokenizedExample> validation;
  std::vector<TokenizedExample> test;
};

struct IterationReport {
  std::size_t iteration = 0;
  rouge::RougeMeans test;      // F1 percentages on the test split
  double val_quality = 0;
  std::size_t mle_only_documents = 0;
  std::vector<StepRecord> steps;
  std::vector<RankedCandidateSet> candidates;  // the training candidates used
};

template <typename T>
struct IterationOutcome {
  ModelParams<T> params;
  IterationReport report;
};

/// One loop iteration: candidates from `generator` (or `cached`), BRIO
/// training starting at `start`, then validation and test evaluation.
template <typename T>
IterationOutcome<T> brio_iteration(const ModelParams<T>& generator, const ModelParams<T>& start,
                                   const LoopData& data, const Vocabulary& vocab,
                                   const BrioConfig& cfg, std::uint64_t seed,
                                   std::size_t iteration, std::size_t threads = 1,
                                   const std::vector<RankedCandidateSet>* cached = nullptr) {
  IterationReport rep;
  rep.iteration = iteration;
  rep.candidates = cached ? *cached : generate_candidate_sets(generator, data.train, vocab, cfg, threads);
  auto stage = brio_train_stage(start, rep.candidates, cfg, splitmix64(seed + iteration),
                                iteration == 1 ? "brio" : "loop");
  rep.steps = std::move(stage.steps);
  rep.mle_only_documents = stage.mle_only_documents;
  rep.val_quality = evaluate(stage.params, data.validation, vocab, cfg.decode, threads).mean_quality;
  rep.test = evaluate(stage.params, data.test, vocab, cfg.decode, threads).means;
  return {std::move(stage.params), std::move(rep)};
}

template <typename T>
struct LoopResult {
  ModelParams<T> params;  // best iteration by validation quality
  std::size_t best_iteration = 0;
  std::vector<IterationReport> iterations;
};

/// Regenerates candidates with the current model and retrains, repeated
/// `loop_iterations` times. With zero iterations the input is returned as is.
template <typename T>
LoopResult<T> brio_loop(const ModelParams<T>& finetuned, const LoopData& data, const Vocabulary& vocab,
                        const BrioConfig& cfg, std::uint64_t seed, std::size_t threads = 1) {
  cfg.validate();
  LoopResult<T> result{finetuned, 0, {}};
  ModelParams<T> current = finetuned;
  double best_val = -1;
  for (std::size_t it = 1; it <= cfg.loop_iterations; ++it) {
    const ModelParams<T>& start = cfg.restart_from_finetuned ? finetuned : current;
    auto out = brio_iteration(current, start, data, vocab, cfg, seed, it, threads);
    current = std::move(out.params);
    if (out.report.val_quality > best_val) {
      best_val = out.report.val_quality;
      result.best_iteration = it;
      result.params = current;
    }
    result.iterations.push_back(std::move(out.report));
  }
  return result;
}

}  // namespace brio
