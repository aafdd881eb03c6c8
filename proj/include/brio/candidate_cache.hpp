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

// Candidate cache: JSON lines. The first line is a header
//   {"config_hash": ..., "iteration": k, "split": "train"}
// and every following line holds one document's ranked candidates.

#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "brio/brio.hpp"

namespace brio {

struct CandidateCacheHeader {
  std::string config_hash;
  std::size_t iteration = 0;
  std::string split;

  bool operator==(const CandidateCacheHeader&) const = default;
};

inline nlohmann::json candidate_set_to_json(const RankedCandidateSet& s) {
  nlohmann::json cands = nlohmann::json::array();
  for (const CandSum& c : s.candidates) {
    cands.push_back({{"text", c.text},
                     {"token_ids", c.tokens},
                     {"model_score", c.model_score},
                     {"r1", c.rouge.rouge1.f1},
                     {"r2", c.rouge.rouge2.f1},
                     {"rl", c.rouge.rougeL.f1},
                     {"precision", {c.rouge.rouge1.precision, c.rouge.rouge2.precision, c.rouge.rougeL.precision}},
                     {"recall", {c.rouge.rouge1.recall, c.rouge.rouge2.recall, c.rouge.rougeL.recall}},
                     {"quality", c.quality},
                     {"generation_index", c.generation_index}});
  }
  return {{"doc_id", s.doc_id},
          {"source_ids", s.source_ids},
          {"reference_ids", s.reference_ids},
          {"candidates", std::move(cands)}};
}

inline RankedCandidateSet candidate_set_from_json(const nlohmann::json& j) {
  RankedCandidateSet s;
  s.doc_id = j.at("doc_id").get<std::string>();
  s.source_ids = j.at("source_ids").get<std::vector<int>>();
  s.reference_ids = j.at("reference_ids").get<std::vector<int>>();
  for (const auto& c : j.at("candidates")) {
    CandSum cs;
    cs.doc_id = s.doc_id;
    cs.text = c.at("text").get<std::string>();
    cs.tokens = c.at("token_ids").get<std::vector<int>>();
    cs.model_score = c.at("model_score").get<double>();
    const auto p = c.at("precision").get<std::vector<double>>();
    const auto r = c.at("recall").get<std::vector<double>>();
    if (p.size() != 3 || r.size() != 3) throw std::runtime_error("precision/recall must have 3 entries");
    cs.rouge = {{p[0], r[0], c.at("r1").get<double>()},
                {p[1], r[1], c.at("r2").get<double>()},
                {p[2], r[2], c.at("rl").get<double>()}};
    cs.quality = c.at("quality").get<double>();
    cs.generation_index = c.at("generation_index").get<std::size_t>();
    s.candidates.push_back(std::move(cs));
  }
  if (!is_ranked(s.candidates)) throw std::runtime_error("candidates of " + s.doc_id + " are not in rank order");
  return s;
}

inline void write_candidate_cache(const std::string& path, const CandidateCacheHeader& h,
                                  const std::vector<RankedCandidateSet>& sets) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write candidate cache: " + path);
  out << nlohmann::json{{"config_hash", h.config_hash}, {"iteration", h.iteration}, {"split", h.split}}.dump()
      << '\n';
  for (const auto& s : sets) out << candidate_set_to_json(s).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing candidate cache: " + path);
}

inline CandidateCacheHeader read_candidate_cache_header(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw std::runtime_error("cannot read candidate cache: " + path);
  try {
    const auto j = nlohmann::json::parse(line);
    return {j.at("config_hash").get<std::string>(), j.at("iteration").get<std::size_t>(),
            j.at("split").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad candidate cache header (" + e.what() + ")");
  }
}

inline std::vector<RankedCandidateSet> read_candidate_cache(const std::string& path,
                                                            CandidateCacheHeader* header = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open candidate cache: " + path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<RankedCandidateSet> sets;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (line_no == 1) {
        if (header)
          *header = {j.at("config_hash").get<std::string>(), j.at("iteration").get<std::size_t>(),
                     j.at("split").get<std::string>()};
        continue;
      }
      sets.push_back(candidate_set_from_json(j));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return sets;
}

}  // namespace brio
