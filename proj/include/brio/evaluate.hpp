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

#include <string>
#include <vector>

#include "brio/corpus.hpp"
#include "brio/decode.hpp"
#include "brio/model.hpp"
#include "brio/parallel.hpp"
#include "brio/rouge.hpp"

namespace brio {

struct DocumentScore {
  std::string doc_id;
  std::string summary;
  rouge::RougeTriple rouge;
};

struct EvalResult {
  std::vector<DocumentScore> documents;
  rouge::RougeMeans means;     // F1 percentages
  double mean_quality = 0;     // mean quality_score, in [0, 1]
};

/// Greedy-decodes every example and scores it against its reference.
template <typename T>
EvalResult evaluate(const ModelParams<T>& params, const std::vector<TokenizedExample>& examples,
                    const Vocabulary& vocab, const DecodeConfig& decode, std::size_t threads = 1) {
  EvalResult r;
  r.documents.resize(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const auto& ex = examples[i];
    const Hypothesis h = greedy_decode(params, ex.source_ids, decode);
    const auto words = id_tokens(h.tokens, vocab);
    r.documents[i] = {ex.doc_id, decode_tokens(h.tokens, vocab),
                      rouge::rouge_triple(words, ex.reference_tokens)};
  });
  std::vector<rouge::RougeTriple> triples;
  for (const auto& d : r.documents) {
    triples.push_back(d.rouge);
    r.mean_quality += rouge::quality_score(d.rouge);
  }
  if (!triples.empty()) r.mean_quality /= static_cast<double>(triples.size());
  r.means = rouge::mean_f1_percent(triples);
  return r;
}

}  // namespace brio
