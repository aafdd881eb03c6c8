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

// Brute-force ROUGE used as an oracle: n-gram overlap by direct scanning and
// LCS by trying every subsequence of the shorter sequence.

#pragma once

#include <cstddef>
#include <vector>

namespace brio::testing {

inline std::size_t count_at(const std::vector<int>& s, const std::vector<int>& gram) {
  std::size_t c = 0;
  for (std::size_t i = 0; i + gram.size() <= s.size(); ++i) {
    bool eq = true;
    for (std::size_t k = 0; k < gram.size(); ++k) eq = eq && s[i + k] == gram[k];
    c += eq;
  }
  return c;
}

/// Clipped overlap: every distinct candidate n-gram counted once, min with ref.
inline std::size_t naive_overlap(const std::vector<int>& cand, const std::vector<int>& ref,
                                 std::size_t n) {
  std::size_t overlap = 0;
  for (std::size_t i = 0; i + n <= cand.size(); ++i) {
    const std::vector<int> gram(cand.begin() + i, cand.begin() + i + n);
    bool first = true;
    for (std::size_t j = 0; j < i; ++j)
      if (std::vector<int>(cand.begin() + j, cand.begin() + j + n) == gram) first = false;
    if (!first) continue;
    const std::size_t a = count_at(cand, gram), b = count_at(ref, gram);
    overlap += a < b ? a : b;
  }
  return overlap;
}

inline bool is_subsequence(const std::vector<int>& sub, const std::vector<int>& s) {
  std::size_t k = 0;
  for (int x : s)
    if (k < sub.size() && sub[k] == x) ++k;
  return k == sub.size();
}

inline std::size_t exhaustive_lcs(const std::vector<int>& a, const std::vector<int>& b) {
  const std::vector<int>& small = a.size() <= b.size() ? a : b;
  const std::vector<int>& big = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << small.size()); ++mask) {
    std::vector<int> sub;
    for (std::size_t i = 0; i < small.size(); ++i)
      if (mask >> i & 1) sub.push_back(small[i]);
    if (sub.size() > best && is_subsequence(sub, big)) best = sub.size();
  }
  return best;
}

inline double oracle_f1(std::size_t overlap, std::size_t cand_total, std::size_t ref_total) {
  if (cand_total == 0 || ref_total == 0 || overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(cand_total);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
  return 2 * p * r / (p + r);
}

}  // namespace brio::testing
