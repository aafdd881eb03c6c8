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

#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "brio/corpus.hpp"
#include "brio/rng.hpp"
#include "brio/rouge.hpp"
#include "rouge_oracle.hpp"

namespace brio::rouge {
namespace {

std::vector<std::string> T(const std::string& s) { return tokenize(s); }

TEST(Rouge, UnigramFixtures) {
  EXPECT_DOUBLE_EQ(rouge_triple(T("the cat sat"), T("the cat sat")).rouge1.f1, 1.0);
  const auto s = rouge_triple(T("the cat sat"), T("the cat was sad")).rouge1;
  EXPECT_NEAR(s.precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.recall, 0.5, 1e-12);
  EXPECT_NEAR(s.f1, 4.0 / 7.0, 1e-12);
}

TEST(Rouge, BigramFixture) {
  const auto c = T("a b c d"), r = T("a b x d");
  const auto s = rouge_n(std::span<const std::string>(c), std::span<const std::string>(r), 2);
  EXPECT_NEAR(s.precision, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.recall, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.f1, 1.0 / 3.0, 1e-12);
}

TEST(Rouge, LcsFixtures) {
  const auto a = T("a b c d"), b = T("a c b d");
  EXPECT_EQ(lcs_length(std::span<const std::string>(a), std::span<const std::string>(b)), 3u);
  EXPECT_NEAR(rouge_triple(a, b).rougeL.f1, 0.75, 1e-12);
  EXPECT_DOUBLE_EQ(rouge_triple(T("v w x y z"), T("v w x y z")).rougeL.f1, 1.0);
  EXPECT_DOUBLE_EQ(rouge_triple(T("x y"), T("a b")).rougeL.f1, 0.0);
}

TEST(Rouge, ClipsRepeatedNgrams) {
  const auto s = rouge_triple(T("the the the"), T("the cat")).rouge1;
  EXPECT_NEAR(s.precision, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.recall, 0.5, 1e-12);
}

TEST(Rouge, EmptyAndShortSequencesScoreZero) {
  const std::vector<std::string> empty;
  EXPECT_EQ(rouge_triple(empty, T("a b")), RougeTriple{});
  EXPECT_EQ(rouge_triple(T("a b"), empty), RougeTriple{});
  EXPECT_DOUBLE_EQ(rouge_triple(T("a"), T("a")).rouge2.f1, 0.0);
  const std::vector<int> x{1, 2};
  EXPECT_THROW(rouge_n(std::span<const int>(x), std::span<const int>(x), 0), std::invalid_argument);
}

TEST(Rouge, QualityScore) {
  auto tri = [](double a, double b, double c) {
    return RougeTriple{{0, 0, a}, {0, 0, b}, {0, 0, c}};
  };
  EXPECT_NEAR(quality_score(tri(0.6, 0.3, 0.3)), 0.4, 1e-12);
  EXPECT_DOUBLE_EQ(quality_score(tri(1, 1, 1)), 1.0);
  EXPECT_NEAR(quality_score(tri(4.0 / 7, 0, 4.0 / 7)), 8.0 / 21, 1e-12);
}

TEST(Rouge, MeansArePercentages) {
  const std::vector<RougeTriple> t{{{0, 0, 1.0}, {0, 0, 0.5}, {0, 0, 0.25}},
                                   {{0, 0, 0.0}, {0, 0, 0.5}, {0, 0, 0.75}}};
  const RougeMeans m = mean_f1_percent(t);
  EXPECT_DOUBLE_EQ(m.r1, 50.0);
  EXPECT_DOUBLE_EQ(m.r2, 50.0);
  EXPECT_DOUBLE_EQ(m.rl, 50.0);
  EXPECT_EQ(mean_f1_percent({}), RougeMeans{});
}

TEST(Rouge, MatchesBruteForceOracle) {
  Rng rng = make_rng(11, 0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> c(uniform_index(rng, 9)), r(uniform_index(rng, 9));
    for (int& x : c) x = static_cast<int>(uniform_index(rng, 3));
    for (int& x : r) x = static_cast<int>(uniform_index(rng, 3));
    const RougeTriple t = rouge_triple(c, r);
    for (std::size_t n : {1u, 2u}) {
      const double want = testing::oracle_f1(testing::naive_overlap(c, r, n),
                                             c.size() >= n ? c.size() - n + 1 : 0,
                                             r.size() >= n ? r.size() - n + 1 : 0);
      EXPECT_EQ((n == 1 ? t.rouge1 : t.rouge2).f1, want);
    }
    EXPECT_EQ(lcs_length(std::span<const int>(c), std::span<const int>(r)), testing::exhaustive_lcs(c, r));
    EXPECT_EQ(t.rougeL.f1, testing::oracle_f1(testing::exhaustive_lcs(c, r), c.size(), r.size()));
  }
}

}  // namespace
}  // namespace brio::rouge
