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

// Experiment configuration: an INI file with one section per module.
//
//   [experiment]  corpus, seed, output_dir, max_documents, threads
//   [corpus]      vocab_max_size, min_count
//   [model]       model_dim, num_heads, ffn_dim, encoder_layers, decoder_layers,
//                 max_source_len, max_target_len, dropout, tie_embeddings
//   [finetune]    batch_size, epochs, learning_rate, warmup_steps
//   [decode]      num_beams, num_beam_groups, diversity_penalty, max_decode_len,
//                 length_penalty
//   [brio]        num_candidates, margin, length_penalty, ctr_weight, mle_weight,
//                 learning_rate, epochs, batch_size, loop_iterations,
//                 restart_from_finetuned
//
// Missing keys keep their defaults; unknown sections or keys are errors.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "brio/brio.hpp"
#include "brio/decode.hpp"
#include "brio/model.hpp"

namespace brio {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::filesystem::path corpus_path;
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "brio_out";
  std::size_t max_documents = 0;  // 0 keeps every document
  std::size_t threads = 1;
  std::size_t vocab_max_size = 2000;
  std::size_t min_count = 1;
  ModelConfig model;  // vocab_size is filled in from the built vocabulary
  FinetuneConfig finetune;
  BrioConfig brio;    // brio.decode doubles as the evaluation decode config

  /// Checks every nested invariant that does not depend on the vocabulary.
  void validate() const {
    if (corpus_path.empty()) throw ConfigError("invalid config: experiment.corpus is required");
    if (!std::filesystem::exists(corpus_path))
      throw ConfigError("invalid config: corpus file not found: " + corpus_path.string());
    if (vocab_max_size <= special::kCount)
      throw ConfigError("invalid config: corpus.vocab_max_size must exceed 4");
    if (min_count < 1) throw ConfigError("invalid config: corpus.min_count must be >= 1");
    try {
      ModelConfig m = model;
      m.vocab_size = vocab_max_size;
      m.validate();
      finetune.validate();
      brio.validate();
      if (brio.decode.max_decode_len > model.max_target_len)
        throw std::invalid_argument("decode.max_decode_len exceeds model.max_target_len");
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

using KeySetter = std::function<void(const std::string&)>;

template <typename U>
U parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  U v{};
  if constexpr (std::is_unsigned_v<U>) {
    if (!text.empty() && text.front() == '-') throw ConfigError("config key " + key + ": expected a non-negative integer, got '" + text + "'");
  }
  in >> v;
  if (!in || !(in >> std::ws).eof())
    throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key " + key + ": expected true/false, got '" + text + "'");
}

inline std::map<std::string, KeySetter> config_keys(ExperimentConfig& c,
                                                    const std::filesystem::path& base) {
  auto sz = [](std::size_t& f) {
    return [&f](const std::string& v) { f = parse_number<std::size_t>("", v); };
  };
  auto real = [](double& f) {
    return [&f](const std::string& v) { f = parse_number<double>("", v); };
  };
  auto u64 = [](std::uint64_t& f) {
    return [&f](const std::string& v) { f = parse_number<std::uint64_t>("", v); };
  };
  auto flag = [](bool& f) { return [&f](const std::string& v) { f = parse_bool("", v); }; };
  return {
      {"experiment.corpus", [&c, base](const std::string& v) { c.corpus_path = base / v; }},
      {"experiment.seed", u64(c.seed)},
      {"experiment.output_dir", [&c, base](const std::string& v) { c.output_dir = base / v; }},
      {"experiment.max_documents", sz(c.max_documents)},
      {"experiment.threads", sz(c.threads)},
      {"corpus.vocab_max_size", sz(c.vocab_max_size)},
      {"corpus.min_count", sz(c.min_count)},
      {"model.model_dim", sz(c.model.model_dim)},
      {"model.num_heads", sz(c.model.num_heads)},
      {"model.ffn_dim", sz(c.model.ffn_dim)},
      {"model.encoder_layers", sz(c.model.num_encoder_layers)},
      {"model.decoder_layers", sz(c.model.num_decoder_layers)},
      {"model.max_source_len", sz(c.model.max_source_len)},
      {"model.max_target_len", sz(c.model.max_target_len)},
      {"model.dropout", real(c.model.dropout_rate)},
      {"model.tie_embeddings", flag(c.model.tie_embeddings)},
      {"finetune.batch_size", sz(c.finetune.batch_size)},
      {"finetune.epochs", sz(c.finetune.epochs)},
      {"finetune.learning_rate", real(c.finetune.learning_rate)},
      {"finetune.warmup_steps", u64(c.finetune.warmup_steps)},
      {"decode.num_beams", sz(c.brio.decode.num_beams)},
      {"decode.num_beam_groups", sz(c.brio.decode.num_beam_groups)},
      {"decode.diversity_penalty", real(c.brio.decode.diversity_penalty)},
      {"decode.max_decode_len", sz(c.brio.decode.max_decode_len)},
      {"decode.length_penalty", real(c.brio.decode.length_penalty)},
      {"brio.num_candidates", sz(c.brio.num_candidates)},
      {"brio.margin", real(c.brio.margin)},
      {"brio.length_penalty", real(c.brio.length_penalty)},
      {"brio.ctr_weight", real(c.brio.ctr_weight)},
      {"brio.mle_weight", real(c.brio.mle_weight)},
      {"brio.learning_rate", real(c.brio.learning_rate)},
      {"brio.epochs", sz(c.brio.epochs)},
      {"brio.batch_size", sz(c.brio.batch_size)},
      {"brio.loop_iterations", sz(c.brio.loop_iterations)},
      {"brio.restart_from_finetuned", flag(c.brio.restart_from_finetuned)},
  };
}

}  // namespace detail

/// Parses INI text. Relative paths resolve against `base_dir`.
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  auto keys = detail::config_keys(c, base_dir);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config: key '" + section + "' must be inside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      auto it = keys.find(full);
      if (it == keys.end()) throw ConfigError("config: unknown key " + full);
      try {
        it->second(value.data());
      } catch (const ConfigError& e) {
        throw ConfigError("config key " + full + ": invalid value '" + value.data() + "'");
      }
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  return parse_config(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Config hashes. Each stage hashes the settings it depends on plus the hash
// of its predecessor, so a change upstream invalidates everything after it.

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return fnv1a(s.str());
}

struct StageHashes {
  std::string split, finetune, candidates, brio, loop;
};

inline StageHashes stage_hashes(const ExperimentConfig& c) {
  auto chain = [](const std::string& prev, const std::string& text) {
    return hex64(fnv1a(text, fnv1a(prev)));
  };
  auto real = [](double v) {
    std::ostringstream s;
    s << std::hexfloat << v;
    return s.str();
  };
  std::ostringstream split, ft, cands, brio, loop;
  split << "corpus=" << hex64(file_fingerprint(c.corpus_path)) << "\nseed=" << c.seed
        << "\nmax_documents=" << c.max_documents << "\nvocab_max_size=" << c.vocab_max_size
        << "\nmin_count=" << c.min_count << '\n';
  const ModelConfig& m = c.model;
  const DecodeConfig& d = c.brio.decode;
  ft << "model=" << m.model_dim << ',' << m.num_heads << ',' << m.ffn_dim << ','
     << m.num_encoder_layers << ',' << m.num_decoder_layers << ',' << m.max_source_len << ','
     << m.max_target_len << ',' << real(m.dropout_rate) << ',' << m.tie_embeddings
     << "\nfinetune=" << c.finetune.batch_size << ',' << c.finetune.epochs << ','
     << real(c.finetune.learning_rate) << ',' << c.finetune.warmup_steps << "\ndecode="
     << d.num_beams << ',' << d.num_beam_groups << ',' << real(d.diversity_penalty) << ','
     << d.max_decode_len << ',' << real(d.length_penalty) << '\n';
  const BrioConfig& b = c.brio;
  cands << "candidates=" << b.num_candidates << ',' << real(b.length_penalty) << '\n';
  brio << "brio=" << real(b.margin) << ',' << real(b.ctr_weight) << ',' << real(b.mle_weight) << ','
       << real(b.learning_rate) << ',' << b.epochs << ',' << b.batch_size << '\n';
  loop << "loop=" << b.loop_iterations << ',' << b.restart_from_finetuned << '\n';
  StageHashes h;
  h.split = chain("", split.str());
  h.finetune = chain(h.split, ft.str());
  h.candidates = chain(h.finetune, cands.str());
  h.brio = chain(h.candidates, brio.str());
  h.loop = chain(h.brio, loop.str());
  return h;
}

}  // namespace brio
