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
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

namespace brio::rouge {

struct RougeScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;

  bool operator==(const RougeScore&) const = default;
};

struct RougeTriple {
  RougeScore rouge1;
  RougeScore rouge2;
  RougeScore rougeL;

  bool operator==(const RougeTriple&) const = default;
};

inline RougeScore make_score(double overlap, std::size_t cand_count, std::size_t ref_count) {
  RougeScore s;
  if (cand_count == 0 || ref_count == 0) return s;
  s.precision = overlap / static_cast<double>(cand_count);
  s.recall = overlap / static_cast<double>(ref_count);
  if (s.precision + s.recall > 0)
    s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

/// ROUGE-N with clipped n-gram counts.
template <typename Token>
RougeScore rouge_n(std::span<const Token> candidate, std::span<const Token> reference,
                   std::size_t n) {
  if (n == 0) throw std::invalid_argument("rouge_n: n must be >= 1");
  using Gram = std::vector<Token>;
  auto count = [n](std::span<const Token> seq, std::map<Gram, std::size_t>& out) {
    std::size_t total = 0;
    for (std::size_t i = 0; i + n <= seq.size(); ++i, ++total)
      ++out[Gram(seq.begin() + i, seq.begin() + i + n)];
    return total;
  };
  std::map<Gram, std::size_t> cand, ref;
  const std::size_t cand_total = count(candidate, cand);
  const std::size_t ref_total = count(reference, ref);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return make_score(static_cast<double>(overlap), cand_total, ref_total);
}

template <typename Token>
std::size_t lcs_length(std::span<const Token> a, std::span<const Token> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Summary-level ROUGE-L over the whole sequences.
template <typename Token>
RougeScore rouge_l(std::span<const Token> candidate, std::span<const Token> reference) {
  return make_score(static_cast<double>(lcs_length(candidate, reference)), candidate.size(),
                    reference.size());
}

template <typename Token>
RougeTriple rouge_triple(std::span<const Token> candidate, std::span<const Token> reference) {
  return {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2),
          rouge_l(candidate, reference)};
}

template <typename Token>
RougeTriple rouge_triple(const std::vector<Token>& candidate, const std::vector<Token>& reference) {
  return rouge_triple(std::span<const Token>(candidate), std::span<const Token>(reference));
}

/// Ranking key for candidates: mean of the three F1 values.
inline double quality_score(const RougeTriple& t) {
  return (t.rouge1.f1 + t.rouge2.f1 + t.rougeL.f1) / 3.0;
}

/// Component-wise mean of F1s, as percentages.
struct RougeMeans {
  double r1 = 0;
  double r2 = 0;
  double rl = 0;

  bool operator==(const RougeMeans&) const = default;
};

inline RougeMeans mean_f1_percent(std::span<const RougeTriple> triples) {
  RougeMeans m;
  if (triples.empty()) return m;
  for (const auto& t : triples) {
    m.r1 += t.rouge1.f1;
    m.r2 += t.rouge2.f1;
    m.rl += t.rougeL.f1;
  }
  const double k = 100.0 / static_cast<double>(triples.size());
  m.r1 *= k;
  m.r2 *= k;
  m.rl *= k;
  return m;
}

}  // namespace brio::rouge
