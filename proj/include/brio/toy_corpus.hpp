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

// Synthetic lead-sentence summarization corpus. Documents are a few sentences
// of pseudo-words; the reference summary is the first sentence with a little
// noise (word substitutions and drops), so a model has to learn to copy the
// lead while references stay imperfect.

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "brio/corpus.hpp"
#include "brio/rng.hpp"

namespace brio {

struct ToyCorpusConfig {
  std::size_t documents = 500;
  std::size_t lexicon_size = 150;
  std::size_t min_sentences = 3, max_sentences = 4;
  std::size_t min_words = 4, max_words = 7;
  double replace_rate = 0.10;
  double drop_rate = 0.05;
};

/// Deterministic pseudo-word lexicon built from consonant-vowel syllables.
inline std::vector<std::string> toy_lexicon(std::size_t size) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  std::vector<std::string> syllables;
  for (char c : consonants)
    for (char v : vowels) syllables.push_back(std::string{c, v});
  std::vector<std::string> words;
  std::set<std::string> seen;
  for (std::size_t i = 0; words.size() < size; ++i) {
    std::string w = syllables[(i * 7) % syllables.size()] +
                    syllables[(i * 13 + i / syllables.size() + 3) % syllables.size()];
    if (i / (syllables.size() * 3) % 2 == 1) w += syllables[(i * 11 + 5) % syllables.size()];
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

inline std::vector<Document> make_toy_corpus(const ToyCorpusConfig& cfg, std::uint64_t seed) {
  const auto lexicon = toy_lexicon(cfg.lexicon_size);
  Rng rng = make_rng(seed, 7);
  auto between = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(uniform_index(rng, hi - lo + 1));
  };
  auto word = [&] { return lexicon[uniform_index(rng, lexicon.size())]; };
  std::vector<Document> docs;
  for (std::size_t d = 0; d < cfg.documents; ++d) {
    std::vector<std::vector<std::string>> sentences(between(cfg.min_sentences, cfg.max_sentences));
    for (auto& s : sentences) {
      s.resize(between(cfg.min_words, cfg.max_words));
      for (auto& w : s) w = word();
    }
    std::string text;
    for (const auto& s : sentences) {
      for (const auto& w : s) text += w + ' ';
      text += ". ";
    }
    text.pop_back();
    std::string summary;
    for (const auto& w : sentences.front()) {
      const double u = uniform01(rng);
      if (u < cfg.drop_rate) continue;
      summary += (u < cfg.drop_rate + cfg.replace_rate ? word() : w) + ' ';
    }
    if (summary.empty()) summary = sentences.front().front() + ' ';
    summary += '.';
    char id[32];
    std::snprintf(id, sizeof id, "toy-%04zu", d);
    docs.push_back({id, text, summary, std::nullopt});
  }
  return docs;
}

}  // namespace brio
