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

// Checkpoint layout (all integers little-endian):
//
//   8 bytes   magic "BRIOCKPT"
//   u32       format version
//   u64       manifest length in bytes
//   manifest  UTF-8 text, one "key value" entry per line:
//               config_hash <hex>
//               model.<field> <value>          (every ModelConfig field)
//               tensor <name> <rows> <cols> <count>
//   payload   float32 values of each tensor in manifest order

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "brio/model.hpp"

namespace brio {

inline constexpr char kCheckpointMagic[8] = {'B', 'R', 'I', 'O', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelParams<float> params;
  std::string config_hash;
};

namespace detail {

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw CheckpointError("checkpoint: truncated file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

inline std::string model_manifest(const ModelConfig& c) {
  std::ostringstream s;
  s << "model.vocab_size " << c.vocab_size << '\n'
    << "model.model_dim " << c.model_dim << '\n'
    << "model.num_heads " << c.num_heads << '\n'
    << "model.ffn_dim " << c.ffn_dim << '\n'
    << "model.num_encoder_layers " << c.num_encoder_layers << '\n'
    << "model.num_decoder_layers " << c.num_decoder_layers << '\n'
    << "model.max_source_len " << c.max_source_len << '\n'
    << "model.max_target_len " << c.max_target_len << '\n'
    << "model.dropout_rate " << std::hexfloat << c.dropout_rate << std::defaultfloat << '\n'
    << "model.tie_embeddings " << (c.tie_embeddings ? 1 : 0) << '\n';
  return s.str();
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const ModelParams<float>& params,
                             const std::string& config_hash) {
  std::ostringstream manifest;
  manifest << "config_hash " << (config_hash.empty() ? "-" : config_hash) << '\n'
           << detail::model_manifest(params.config());
  for (const auto& t : params.tensors())
    manifest << "tensor " << t.name << ' ' << t.value.rows << ' ' << t.value.cols << ' '
             << t.value.size() << '\n';
  const std::string m = manifest.str();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, m.size());
  out.write(m.data(), static_cast<std::streamsize>(m.size()));
  for (const auto& t : params.tensors())
    for (float v : t.value.data) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CheckpointError("checkpoint: bad magic");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  const auto mlen = detail::get_le<std::uint64_t>(in);
  if (mlen > (1u << 26)) throw CheckpointError("checkpoint: manifest too large");
  std::string m(mlen, '\0');
  if (!in.read(m.data(), static_cast<std::streamsize>(mlen)))
    throw CheckpointError("checkpoint: truncated manifest");

  ModelConfig cfg;
  std::string hash;
  struct Entry { std::string name; std::size_t rows, cols; };
  std::vector<Entry> entries;
  std::istringstream ms(m);
  std::string line;
  while (std::getline(ms, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "config_hash") {
      ls >> hash;
      if (hash == "-") hash.clear();
    } else if (key == "tensor") {
      Entry e;
      std::size_t count = 0;
      ls >> e.name >> e.rows >> e.cols >> count;
      if (!ls || count != e.rows * e.cols) throw CheckpointError("checkpoint: bad tensor entry: " + line);
      entries.push_back(e);
    } else if (key == "model.dropout_rate") {
      std::string v;
      ls >> v;
      cfg.dropout_rate = std::strtod(v.c_str(), nullptr);
    } else if (key.rfind("model.", 0) == 0) {
      std::size_t v = 0;
      ls >> v;
      if (key == "model.vocab_size") cfg.vocab_size = v;
      else if (key == "model.model_dim") cfg.model_dim = v;
      else if (key == "model.num_heads") cfg.num_heads = v;
      else if (key == "model.ffn_dim") cfg.ffn_dim = v;
      else if (key == "model.num_encoder_layers") cfg.num_encoder_layers = v;
      else if (key == "model.num_decoder_layers") cfg.num_decoder_layers = v;
      else if (key == "model.max_source_len") cfg.max_source_len = v;
      else if (key == "model.max_target_len") cfg.max_target_len = v;
      else if (key == "model.tie_embeddings") cfg.tie_embeddings = v != 0;
      else throw CheckpointError("checkpoint: unknown manifest key " + key);
    } else if (!key.empty()) {
      throw CheckpointError("checkpoint: unknown manifest key " + key);
    }
  }

  // The manifest must describe exactly the layout this config produces.
  ModelParams<float> params = init_params<float>(cfg, 0);
  if (params.tensors().size() != entries.size())
    throw CheckpointError("checkpoint: tensor count does not match model config");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& t = params.tensors()[k];
    if (t.name != entries[k].name || t.value.rows != entries[k].rows || t.value.cols != entries[k].cols)
      throw CheckpointError("checkpoint: tensor " + entries[k].name + " does not match model layout");
    for (float& v : t.value.data) v = std::bit_cast<float>(detail::get_le<std::uint32_t>(in));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("checkpoint: trailing bytes");
  return {std::move(params), hash};
}

inline void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                            const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  write_checkpoint(out, params, config_hash);
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  return read_checkpoint(in);
}

/// Loads and checks the stored shapes against `expected`.
inline Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  const ModelConfig& got = ck.params.config();
  if (!(got == expected))
    throw CheckpointError("checkpoint " + path + " was written for a different model config");
  return ck;
}

}  // namespace brio
