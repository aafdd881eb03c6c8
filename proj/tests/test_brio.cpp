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

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "brio/brio.hpp"
#include "test_util.hpp"

namespace brio {
namespace {

TEST(Contrastive, HandFixtures) {
  EXPECT_EQ(contrastive_loss(std::vector<double>{-1.0, -1.5}, 0.5), 0.0);
  EXPECT_EQ(contrastive_loss(std::vector<double>{-2.0, -1.0}, 0.5), 1.5);
  EXPECT_EQ(contrastive_loss(std::vector<double>{-0.1, -0.7, -0.9, -3.0}, 0.0), 0.0);
  // Rank distance scales the margin: pair (0, 2) needs a gap of 2·margin.
  // Pairs (1, 2) and (0, 2) each fall 0.1 short; (0, 1) sits exactly on it.
  EXPECT_NEAR(contrastive_loss(std::vector<double>{0.0, -0.3, -0.5}, 0.3), 0.2, 1e-15);
}

TEST(Contrastive, PermutationProperty) {
  Rng rng(5);
  const double margin = 0.01;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 7);
    std::vector<double> s(n);
    double cur = -uniform01(rng);
    for (auto& v : s) {
      v = cur;
      cur -= margin + 1e-3 + uniform01(rng);
    }
    EXPECT_EQ(contrastive_loss(s, margin), 0.0);
    const std::size_t k = uniform_index(rng, n - 1);
    std::swap(s[k], s[k + 1]);
    EXPECT_GT(contrastive_loss(s, margin), 0.0);
  }
}

TEST(Contrastive, ShiftInvariant) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(5), t(5);
    const double c = 10 * (uniform01(rng) - 0.5);
    for (std::size_t i = 0; i < 5; ++i) s[i] = -3 * uniform01(rng), t[i] = s[i] + c;
    EXPECT_NEAR(contrastive_loss(s, 0.1), contrastive_loss(t, 0.1), 1e-12);
  }
}

TEST(Contrastive, GraphMatchesValueAndChecksLength) {
  const std::vector<double> s{-0.5, -0.2, -0.9, -0.1};
  ad::Tape<double> tape(false);
  std::vector<ad::Var> vars;
  for (double v : s) vars.push_back(tape.constant(Matrix<double>(1, 1, v)));
  EXPECT_NEAR(ad::scalar(tape, contrastive_loss(tape, vars, 0.05)), contrastive_loss(s, 0.05), 1e-15);
  RankedCandidateSet set;
  set.candidates.resize(3);
  EXPECT_THROW(contrastive_loss(set, s, 0.1), std::invalid_argument);
}

TEST(KendallTau, KnownValues) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_EQ(*kendall_tau(a, std::vector<double>{10, 20, 30, 40}), 1.0);
  EXPECT_EQ(*kendall_tau(a, std::vector<double>{4, 3, 2, 1}), -1.0);
  EXPECT_NEAR(*kendall_tau(a, std::vector<double>{1, 1, 2, 3}), 5.0 / std::sqrt(30.0), 1e-15);
  EXPECT_FALSE(kendall_tau(a, std::vector<double>{2, 2, 2, 2}).has_value());
  EXPECT_THROW(kendall_tau(a, std::vector<double>{1}), std::invalid_argument);
}

TEST(Batches, ShortLastBatch) {
  const auto b = make_batches(10, 4);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2], std::make_pair(std::size_t{8}, std::size_t{10}));
  EXPECT_THROW(make_batches(3, 0), std::invalid_argument);
  EXPECT_EQ(epoch_order(20, 1, 1), epoch_order(20, 1, 1));
  EXPECT_NE(epoch_order(20, 1, 1), epoch_order(20, 1, 2));
}

TEST(Ranking, SortOrderAndInvariant) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CandSum> c(6);
    for (std::size_t i = 0; i < c.size(); ++i) {
      // Coarse values so ties on quality and score actually happen.
      c[i].quality = static_cast<double>(uniform_index(rng, 3)) / 3;
      c[i].model_score = -static_cast<double>(uniform_index(rng, 2));
      c[i].generation_index = i;
    }
    sort_candidates(c);
    EXPECT_TRUE(is_ranked(c));
  }
  std::vector<CandSum> bad(2);
  bad[1].quality = 1;
  EXPECT_FALSE(is_ranked(bad));
}

// A small lead-copy task shared by the stage tests.
struct ToyTask {
  Vocabulary vocab;
  ModelConfig model;
  LoopData data;

  explicit ToyTask(std::size_t n = 24) {
    const auto docs = testing::copy_corpus(n, 3, 6);
    vocab = build_vocab(docs, 64);
    model = testing::tiny_config(vocab.size(), 12);
    const auto ex = tokenize_documents(docs, vocab, model.max_source_len, model.max_target_len);
    const std::size_t a = n * 2 / 3, b = n * 5 / 6;
    data.train.assign(ex.begin(), ex.begin() + a);
    data.validation.assign(ex.begin() + a, ex.begin() + b);
    data.test.assign(ex.begin() + b, ex.end());
  }

  BrioConfig brio() const {
    BrioConfig c;
    c.num_candidates = 4;
    c.decode.num_beams = 4;
    c.decode.num_beam_groups = 4;
    c.decode.max_decode_len = 8;
    c.learning_rate = 1e-2;
    c.batch_size = 4;
    return c;
  }
};

RankedCandidateSet hand_set(const ToyTask& t) {
  const auto& ex = t.data.train[0];
  RankedCandidateSet s{ex.doc_id, {}, ex.source_ids, ex.target_ids};
  const std::vector<std::vector<int>> toks{
      ex.target_ids, {special::kBos, 5, special::kEos}, {special::kBos, 6, 7, 5, special::kEos}};
  for (std::size_t i = 0; i < toks.size(); ++i)
    s.candidates.push_back(make_candidate(ex, t.vocab, toks[i], 0.0, i));
  sort_candidates(s.candidates);
  return s;
}

TEST(BrioLoss, ReducesToMleAndCombinesTerms) {
  const ToyTask t;
  const auto p = init_params<double>(t.model, 2);
  const auto set = hand_set(t);
  auto cfg = t.brio();
  cfg.margin = 0.05;
  cfg.ctr_weight = 0.0;
  const auto& ex = t.data.train[0];
  const double mle = mle_loss(forward(p, std::span<const int>(ex.source_ids), decoder_input(ex.target_ids)),
                              decoder_gold(ex.target_ids));
  EXPECT_NEAR(brio_loss(p, set, cfg), mle, 1e-12);
  const auto scores = score_candidates(p, set, cfg.length_penalty);
  const double ctr = contrastive_loss(set, scores, cfg.margin);
  cfg.ctr_weight = 10.0;
  cfg.mle_weight = 0.5;
  EXPECT_NEAR(brio_loss(p, set, cfg), 0.5 * mle + 10.0 * ctr, 1e-10);
  for (std::size_t i = 0; i < set.candidates.size(); ++i)
    EXPECT_NEAR(scores[i], sequence_log_prob(p, std::span<const int>(ex.source_ids), set.candidates[i].tokens, 1.0), 1e-12);
}

TEST(BrioLoss, ZeroWhenMarginsHoldAndMleOff) {
  const ToyTask t;
  const auto p = init_params<double>(t.model, 2);
  auto set = hand_set(t);
  const auto scores = score_candidates(p, set, 1.0);
  // Reorder candidates by model score so every pair is already ranked.
  std::vector<std::size_t> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  RankedCandidateSet ordered = set;
  for (std::size_t i = 0; i < idx.size(); ++i) ordered.candidates[i] = set.candidates[idx[i]];
  auto cfg = t.brio();
  cfg.mle_weight = 0.0;
  cfg.margin = 0.0;
  EXPECT_EQ(brio_loss(p, ordered, cfg), 0.0);
}

TEST(BrioLoss, GradientMatchesFiniteDifferences) {
  const ToyTask t;
  auto p = init_params<double>(t.model, 4);
  const auto set = hand_set(t);
  auto cfg = t.brio();
  cfg.margin = 0.02;
  cfg.ctr_weight = 2.0;
  // Keep away from hinge kinks so central differences are valid.
  const auto s = score_candidates(p, set, 1.0);
  double nearest = 1e9;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j)
      nearest = std::min(nearest, std::abs(s[j] - s[i] + static_cast<double>(j - i) * cfg.margin));
  ASSERT_GT(nearest, 1e-3);
  const auto r = testing::finite_difference_check(p, [&](ModelParams<double>& q, bool grad) {
    ad::Tape<double> tape(grad);
    GraphBuilder<double, ModelParams<double>> g(tape, q);
    const auto parts = brio_loss(g, set, cfg);
    if (grad) tape.backward(parts.total);
    return ad::scalar(tape, parts.total);
  });
  EXPECT_LT(r.worst, 1e-4) << r.worst_name;
}

TEST(Candidates, DeterministicRankedUniqueBounded) {
  const ToyTask t;
  const auto p = init_params<float>(t.model, 6);
  auto cfg = t.brio();
  cfg.num_candidates = 3;
  for (const auto& ex : t.data.train) {
    const auto a = generate_candidates(p, ex, t.vocab, cfg);
    EXPECT_EQ(a, generate_candidates(p, ex, t.vocab, cfg));
    EXPECT_TRUE(is_ranked(a.candidates));
    EXPECT_LE(a.candidates.size(), 3u);
    EXPECT_GE(a.candidates.size(), 1u);
    std::set<std::vector<int>> uniq;
    std::set<std::size_t> idx;
    for (const auto& c : a.candidates) {
      uniq.insert(c.tokens);
      idx.insert(c.generation_index);
      EXPECT_NEAR(c.quality, rouge::quality_score(c.rouge), 1e-15);
      EXPECT_EQ(c.doc_id, ex.doc_id);
    }
    EXPECT_EQ(uniq.size(), a.candidates.size());
    EXPECT_EQ(idx.size(), a.candidates.size());
  }
  const auto sets = generate_candidate_sets(p, t.data.train, t.vocab, cfg, 3);
  for (std::size_t i = 0; i < sets.size(); ++i)
    EXPECT_EQ(sets[i], generate_candidates(p, t.data.train[i], t.vocab, cfg));
}

TEST(Stages, FinetuneLowersLossAndKeepsBestEpoch) {
  const ToyTask t(48);
  FinetuneConfig fc;
  fc.epochs = 5;
  fc.learning_rate = 3e-3;
  fc.warmup_steps = 0;
  auto decode = t.brio().decode;
  const auto r = finetune_stage(init_params<float>(t.model, 1), t.data.train, t.data.validation,
                                t.vocab, fc, decode, 7);
  ASSERT_EQ(r.epochs.size(), 5u);
  EXPECT_LT(r.epochs.back().train_loss, r.epochs.front().train_loss);
  EXPECT_EQ(r.steps.size(), 5 * make_batches(t.data.train.size(), 4).size());
  double best = -1;
  for (const auto& e : r.epochs) best = std::max(best, e.val_quality);
  EXPECT_EQ(r.best_val_quality, best);
  EXPECT_EQ(evaluate(r.params, t.data.validation, t.vocab, decode).mean_quality, best);
  const auto again = finetune_stage(init_params<float>(t.model, 1), t.data.train,
                                    t.data.validation, t.vocab, fc, decode, 7);
  EXPECT_TRUE(again.params.values_equal(r.params));
}

TEST(Stages, BrioWithoutContrastiveIsMle) {
  const ToyTask t;
  const auto p = init_params<float>(t.model, 3);
  auto cfg = t.brio();
  const auto sets = generate_candidate_sets(p, t.data.train, t.vocab, cfg);
  cfg.ctr_weight = 0.0;
  const auto r = brio_train_stage(p, sets, cfg, 5);
  ASSERT_EQ(r.steps.size(), make_batches(sets.size(), cfg.batch_size).size());
  for (const auto& s : r.steps) {
    EXPECT_NEAR(s.loss, s.mle, 1e-6 * std::max(1.0, s.mle));
    EXPECT_GE(s.contrastive, 0.0);
    EXPECT_EQ(s.stage, "brio");
  }
  cfg.ctr_weight = 10.0;
  const auto r2 = brio_train_stage(p, sets, cfg, 5);
  for (const auto& s : r2.steps) {
    EXPECT_GE(s.contrastive, 0.0);
    EXPECT_NEAR(s.loss, s.mle + 10.0 * s.contrastive, 1e-4 * std::max(1.0, s.loss));
  }
  EXPECT_FALSE(r2.params.values_equal(p));
}

TEST(Stages, SingleCandidateSetsTrainOnMleOnly) {
  const ToyTask t;
  const auto p = init_params<float>(t.model, 3);
  auto cfg = t.brio();
  auto sets = generate_candidate_sets(p, t.data.train, t.vocab, cfg);
  sets[0].candidates.resize(1);
  sets[1].candidates.clear();
  EXPECT_EQ(brio_train_stage(p, sets, cfg, 5).mle_only_documents, 2u);
}

TEST(Loop, ZeroIterationsIsIdentity) {
  const ToyTask t;
  const auto p = init_params<float>(t.model, 3);
  auto cfg = t.brio();
  cfg.loop_iterations = 0;
  const auto r = brio_loop(p, t.data, t.vocab, cfg, 1);
  EXPECT_TRUE(r.params.values_equal(p));
  EXPECT_TRUE(r.iterations.empty());
}

TEST(Loop, TwoIterationsReportAndRegenerate) {
  const ToyTask t;
  const auto p = init_params<float>(t.model, 3);
  auto cfg = t.brio();
  cfg.loop_iterations = 2;
  const auto r = brio_loop(p, t.data, t.vocab, cfg, 1);
  ASSERT_EQ(r.iterations.size(), 2u);
  EXPECT_EQ(r.iterations[0].iteration, 1u);
  EXPECT_EQ(r.iterations[1].steps.front().stage, "loop");
  bool differs = false;
  for (std::size_t i = 0; i < t.data.train.size(); ++i)
    differs = differs || !(r.iterations[0].candidates[i] == r.iterations[1].candidates[i]);
  EXPECT_TRUE(differs);
  const auto& best = r.iterations[r.best_iteration - 1];
  for (const auto& it : r.iterations) EXPECT_LE(it.val_quality, best.val_quality);
  EXPECT_EQ(evaluate(r.params, t.data.validation, t.vocab, cfg.decode).mean_quality, best.val_quality);
}

}  // namespace
}  // namespace brio
