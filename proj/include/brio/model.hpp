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

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "brio/autodiff.hpp"
#include "brio/corpus.hpp"
#include "brio/rng.hpp"
#include "brio/tensor.hpp"

namespace brio {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t num_encoder_layers = 2;
  std::size_t num_decoder_layers = 2;
  std::size_t max_source_len = 256;
  std::size_t max_target_len = 64;
  double dropout_rate = 0.0;
  bool tie_embeddings = false;

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    auto check = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("invalid model config: ") + what);
    };
    check(vocab_size > special::kCount, "vocab_size must exceed the 4 reserved ids");
    check(model_dim >= 1, "model_dim must be >= 1");
    check(num_heads >= 1, "num_heads must be >= 1");
    check(model_dim % num_heads == 0, "model_dim must be divisible by num_heads");
    check(ffn_dim >= 1, "ffn_dim must be >= 1");
    check(num_encoder_layers >= 1, "num_encoder_layers must be >= 1");
    check(num_decoder_layers >= 1, "num_decoder_layers must be >= 1");
    check(max_source_len >= 1, "max_source_len must be >= 1");
    check(max_target_len >= 2, "max_target_len must be >= 2");
    check(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must be in [0, 1)");
  }
};

/// All trainable arrays of the encoder-decoder, in a fixed creation order.
template <typename T>
class ModelParams {
 public:
  using scalar_type = T;

  ModelParams() = default;
  explicit ModelParams(ModelConfig config) : config_(config) {}

  const ModelConfig& config() const { return config_; }

  Parameter<T>& add(std::string name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
    index_.emplace(name, tensors_.size());
    tensors_.push_back(Parameter<T>{std::move(name), Matrix<T>(rows, cols), Matrix<T>(rows, cols)});
    return tensors_.back();
  }

  Parameter<T>& at(const std::string& name) { return tensors_[index_of(name)]; }
  const Parameter<T>& at(const std::string& name) const { return tensors_[index_of(name)]; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Parameter<T>>& tensors() { return tensors_; }
  const std::vector<Parameter<T>>& tensors() const { return tensors_; }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& p : tensors_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : tensors_) p.grad.fill(T(0));
  }

  bool values_equal(const ModelParams& o) const {
    if (tensors_.size() != o.tensors_.size() || !(config_ == o.config_)) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].name != o.tensors_[i].name || !(tensors_[i].value == o.tensors_[i].value))
        return false;
    return true;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out(config_);
    for (const auto& p : tensors_) {
      auto& q = out.add(p.name, p.value.rows, p.value.cols);
      for (std::size_t i = 0; i < p.value.size(); ++i) q.value.data[i] = static_cast<U>(p.value.data[i]);
    }
    return out;
  }

 private:
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
  }

  ModelConfig config_;
  std::vector<Parameter<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline std::string layer_name(const char* stack, std::size_t l, const char* rest) {
  return std::string(stack) + "." + std::to_string(l) + "." + rest;
}

template <typename T>
void add_attention(ModelParams<T>& p, const std::string& prefix, std::size_t d) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) p.add(prefix + "." + w, d, d);
  for (const char* b : {"bq", "bk", "bv", "bo"}) p.add(prefix + "." + b, 1, d);
}

template <typename T>
void add_norm(ModelParams<T>& p, const std::string& prefix, std::size_t d) {
  p.add(prefix + ".gain", 1, d).value.fill(T(1));
  p.add(prefix + ".bias", 1, d);
}

template <typename T>
void add_ffn(ModelParams<T>& p, const std::string& prefix, std::size_t d, std::size_t f) {
  p.add(prefix + ".w1", d, f);
  p.add(prefix + ".b1", 1, f);
  p.add(prefix + ".w2", f, d);
  p.add(prefix + ".b2", 1, d);
}

inline bool is_weight_matrix(const std::string& name) {
  // Biases, norm parameters, and the output bias start at their fixed values.
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf[0] == 'w' || name.rfind("embed.", 0) == 0 || name == "output.weight";
}

}  // namespace detail

/// Builds the parameter layout for `config` and draws weights under `seed`:
/// uniform with variance 1/model_dim, norm gains 1, all biases 0.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.model_dim;
  ModelParams<T> p(config);
  p.add("embed.tokens", config.vocab_size, d);
  p.add("embed.source_positions", config.max_source_len, d);
  p.add("embed.target_positions", config.max_target_len, d);
  for (std::size_t l = 0; l < config.num_encoder_layers; ++l) {
    detail::add_norm(p, detail::layer_name("enc", l, "self_norm"), d);
    detail::add_attention(p, detail::layer_name("enc", l, "self"), d);
    detail::add_norm(p, detail::layer_name("enc", l, "ffn_norm"), d);
    detail::add_ffn(p, detail::layer_name("enc", l, "ffn"), d, config.ffn_dim);
  }
  detail::add_norm(p, "enc.final_norm", d);
  for (std::size_t l = 0; l < config.num_decoder_layers; ++l) {
    detail::add_norm(p, detail::layer_name("dec", l, "self_norm"), d);
    detail::add_attention(p, detail::layer_name("dec", l, "self"), d);
    detail::add_norm(p, detail::layer_name("dec", l, "cross_norm"), d);
    detail::add_attention(p, detail::layer_name("dec", l, "cross"), d);
    detail::add_norm(p, detail::layer_name("dec", l, "ffn_norm"), d);
    detail::add_ffn(p, detail::layer_name("dec", l, "ffn"), d, config.ffn_dim);
  }
  detail::add_norm(p, "dec.final_norm", d);
  if (!config.tie_embeddings) p.add("output.weight", d, config.vocab_size);
  p.add("output.bias", 1, config.vocab_size);

  Rng rng = make_rng(seed, /*stream=*/3);
  const double a = std::sqrt(3.0 / static_cast<double>(d));
  for (auto& t : p.tensors()) {
    if (!detail::is_weight_matrix(t.name)) continue;
    for (T& v : t.value.data) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * a);
  }
  return p;
}

struct ForwardOptions {
  // Dropout is applied only when `rng` is set and the config rate is > 0.
  Rng* rng = nullptr;
};

/// Builds encoder/decoder graphs on a tape. `P` is ModelParams<T> (gradients
/// tracked) or const ModelParams<T> (values only).
template <typename T, typename P>
class GraphBuilder {
 public:
  GraphBuilder(ad::Tape<T>& tape, P& params, ForwardOptions opts = {})
      : tape_(tape), params_(params), opts_(opts), cfg_(params.config()) {}

  ad::Var leaf(const std::string& name) { return tape_.param(params_.at(name)); }

  ad::Var linear(ad::Var x, const std::string& prefix, const char* w, const char* b) {
    return ad::add_bias(tape_, ad::matmul(tape_, x, leaf(prefix + "." + w)), leaf(prefix + "." + b));
  }

  ad::Var norm(ad::Var x, const std::string& prefix) {
    return ad::layer_norm(tape_, x, leaf(prefix + ".gain"), leaf(prefix + ".bias"));
  }

  ad::Var drop(ad::Var x) { return ad::dropout(tape_, x, cfg_.dropout_rate, opts_.rng); }

  ad::Var attention(const std::string& prefix, ad::Var query_in, ad::Var kv_in, bool causal,
                    const std::vector<bool>& key_mask) {
    ad::Var q = linear(query_in, prefix, "wq", "bq");
    ad::Var k = linear(kv_in, prefix, "wk", "bk");
    ad::Var v = linear(kv_in, prefix, "wv", "bv");
    ad::Var a = ad::attention(tape_, q, k, v, cfg_.num_heads, causal, key_mask);
    return linear(a, prefix, "wo", "bo");
  }

  ad::Var ffn(const std::string& prefix, ad::Var x) {
    return linear(ad::gelu(tape_, linear(x, prefix, "w1", "b1")), prefix, "w2", "b2");
  }

  ad::Var embed(std::span<const int> ids, const char* positions) {
    std::vector<int> tok(ids.begin(), ids.end());
    std::vector<int> pos(ids.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    ad::Var e = ad::gather_rows(tape_, leaf("embed.tokens"), std::move(tok));
    ad::Var pe = ad::gather_rows(tape_, leaf(positions), std::move(pos));
    return drop(ad::add(tape_, e, pe));
  }

  /// Encoder output (source_len × model_dim).
  ad::Var encode(std::span<const int> source) {
    check_ids(source, cfg_.max_source_len, "source");
    const auto mask = source_mask(source);
    ad::Var x = embed(source, "embed.source_positions");
    for (std::size_t l = 0; l < cfg_.num_encoder_layers; ++l) {
      ad::Var h = norm(x, detail::layer_name("enc", l, "self_norm"));
      x = ad::add(tape_, x, drop(attention(detail::layer_name("enc", l, "self"), h, h, false, mask)));
      h = norm(x, detail::layer_name("enc", l, "ffn_norm"));
      x = ad::add(tape_, x, drop(ffn(detail::layer_name("enc", l, "ffn"), h)));
    }
    return norm(x, "enc.final_norm");
  }

  /// Decoder log-probabilities (target_len × vocab). Row t is the
  /// distribution of the token following target[0..t].
  ad::Var decode(ad::Var memory, std::span<const int> source, std::span<const int> target) {
    check_ids(target, cfg_.max_target_len, "target");
    const auto mask = source_mask(source);
    ad::Var x = embed(target, "embed.target_positions");
    for (std::size_t l = 0; l < cfg_.num_decoder_layers; ++l) {
      ad::Var h = norm(x, detail::layer_name("dec", l, "self_norm"));
      x = ad::add(tape_, x, drop(attention(detail::layer_name("dec", l, "self"), h, h, true, {})));
      h = norm(x, detail::layer_name("dec", l, "cross_norm"));
      x = ad::add(tape_, x, drop(attention(detail::layer_name("dec", l, "cross"), h, memory, false, mask)));
      h = norm(x, detail::layer_name("dec", l, "ffn_norm"));
      x = ad::add(tape_, x, drop(ffn(detail::layer_name("dec", l, "ffn"), h)));
    }
    x = norm(x, "dec.final_norm");
    ad::Var logits = cfg_.tie_embeddings ? ad::matmul_nt(tape_, x, leaf("embed.tokens"))
                                         : ad::matmul(tape_, x, leaf("output.weight"));
    return ad::log_softmax(tape_, ad::add_bias(tape_, logits, leaf("output.bias")));
  }

  ad::Tape<T>& tape() { return tape_; }
  P& params() { return params_; }

  /// Empty when the source has no padding.
  static std::vector<bool> source_mask(std::span<const int> source) {
    std::vector<bool> mask(source.size(), true);
    bool any = false;
    for (std::size_t i = 0; i < source.size(); ++i)
      if (source[i] == special::kPad) mask[i] = false, any = true;
    if (!any) mask.clear();
    return mask;
  }

 private:
  void check_ids(std::span<const int> ids, std::size_t max_len, const char* what) const {
    if (ids.empty()) throw std::invalid_argument(std::string(what) + " sequence is empty");
    if (ids.size() > max_len)
      throw std::invalid_argument(std::string(what) + " sequence of length " +
                                  std::to_string(ids.size()) + " exceeds " + std::to_string(max_len));
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
        throw std::out_of_range(std::string(what) + " id " + std::to_string(id) +
                                " outside vocabulary of " + std::to_string(cfg_.vocab_size));
  }

  ad::Tape<T>& tape_;
  P& params_;
  ForwardOptions opts_;
  ModelConfig cfg_;
};

/// Decoder input / next-token targets of a BOS…EOS sequence.
inline std::vector<int> decoder_input(const std::vector<int>& target) {
  return {target.begin(), target.end() - 1};
}
inline std::vector<int> decoder_gold(const std::vector<int>& target) {
  return {target.begin() + 1, target.end()};
}

/// Log-probability table for (source, decoder input), without gradients.
template <typename T>
Matrix<T> forward(const ModelParams<T>& params, std::span<const int> source,
                  std::span<const int> target) {
  ad::Tape<T> tape(false);
  GraphBuilder<T, const ModelParams<T>> g(tape, params);
  ad::Var mem = g.encode(source);
  return tape.value(g.decode(mem, source, target));
}

/// Mean NLL of `gold` under the rows of `logprobs`; PAD targets are skipped.
template <typename T>
ad::Var mle_loss(ad::Tape<T>& tape, ad::Var logprobs, const std::vector<int>& gold) {
  const auto& lp = tape.value(logprobs);
  if (lp.rows != gold.size())
    throw std::invalid_argument("mle_loss: " + std::to_string(lp.rows) + " rows vs " +
                                std::to_string(gold.size()) + " gold tokens");
  std::size_t scored = 0;
  for (int g : gold) scored += g != special::kPad;
  if (scored == 0) throw std::invalid_argument("mle_loss: every gold position is PAD");
  return ad::scale(tape, ad::pick_sum(tape, logprobs, gold, special::kPad),
                   -1.0 / static_cast<double>(scored));
}

template <typename T>
double mle_loss(const Matrix<T>& logprobs, const std::vector<int>& gold) {
  ad::Tape<T> tape(false);
  ad::Var lp = tape.constant(logprobs);
  return static_cast<double>(ad::scalar(tape, mle_loss(tape, lp, gold)));
}

inline double length_normalizer(std::size_t scored_positions, double alpha) {
  return alpha == 0.0 ? 1.0 : std::pow(static_cast<double>(scored_positions), alpha);
}

/// Length-penalized log-probability f(S) of a BOS-prefixed candidate given the
/// encoder memory. Unterminated (length-capped) candidates are allowed here.
template <typename T, typename P>
ad::Var sequence_score(GraphBuilder<T, P>& g, ad::Var memory, std::span<const int> source,
                       const std::vector<int>& candidate, double alpha) {
  if (candidate.size() < 2 || candidate.front() != special::kBos)
    throw std::invalid_argument("sequence_score: candidate must start with BOS and have a token");
  ad::Var lp = g.decode(memory, source, decoder_input(candidate));
  ad::Var sum = ad::pick_sum(g.tape(), lp, decoder_gold(candidate));
  return ad::scale(g.tape(), sum, 1.0 / length_normalizer(candidate.size() - 1, alpha));
}

inline void check_candidate_framing(const std::vector<int>& c) {
  if (c.size() < 2 || c.front() != special::kBos || c.back() != special::kEos)
    throw std::invalid_argument("sequence_log_prob: candidate must be framed BOS ... EOS");
}

template <typename T>
double sequence_log_prob(const ModelParams<T>& params, std::span<const int> source,
                         const std::vector<int>& candidate, double alpha) {
  check_candidate_framing(candidate);
  ad::Tape<T> tape(false);
  GraphBuilder<T, const ModelParams<T>> g(tape, params);
  ad::Var mem = g.encode(source);
  return static_cast<double>(ad::scalar(tape, sequence_score(g, mem, source, candidate, alpha)));
}

/// Token-at-a-time decoder with key/value caches. Produces the same bits as
/// the matching rows of `forward`.
template <typename T>
class DecoderSession {
 public:
  struct State {
    std::vector<Matrix<T>> self_k, self_v;  // per layer, one row per consumed token
    std::vector<double> next_log_probs;
    std::size_t length = 0;
  };

  DecoderSession(const ModelParams<T>& params, std::span<const int> source)
      : params_(params), cfg_(params.config()), source_(source.begin(), source.end()) {
    ad::Tape<T> tape(false);
    GraphBuilder<T, const ModelParams<T>> g(tape, params);
    memory_ = tape.value(g.encode(source_));
    mask_ = GraphBuilder<T, const ModelParams<T>>::source_mask(source_);
    for (std::size_t l = 0; l < cfg_.num_decoder_layers; ++l) {
      const std::string pre = detail::layer_name("dec", l, "cross");
      cross_k_.push_back(project(memory_, pre, "wk", "bk"));
      cross_v_.push_back(project(memory_, pre, "wv", "bv"));
    }
  }

  std::size_t vocab_size() const { return cfg_.vocab_size; }
  std::size_t max_length() const { return cfg_.max_target_len; }
  const Matrix<T>& memory() const { return memory_; }
  std::span<const double> log_probs(const State& s) const { return s.next_log_probs; }

  State start() const {
    State s;
    s.self_k.resize(cfg_.num_decoder_layers);
    s.self_v.resize(cfg_.num_decoder_layers);
    for (std::size_t l = 0; l < cfg_.num_decoder_layers; ++l) {
      s.self_k[l] = Matrix<T>(0, cfg_.model_dim);
      s.self_v[l] = Matrix<T>(0, cfg_.model_dim);
    }
    return advance(s, special::kBos);
  }

  /// Consumes `token` and computes the next-token distribution.
  State advance(const State& prev, int token) const {
    if (prev.length >= cfg_.max_target_len)
      throw std::invalid_argument("decoder: target length limit reached");
    if (token < 0 || static_cast<std::size_t>(token) >= cfg_.vocab_size)
      throw std::out_of_range("decoder: token id out of range");
    State s = prev;
    const std::size_t pos = s.length;
    const std::size_t d = cfg_.model_dim;
    Matrix<T> x(1, d);
    {
      const auto e = params_.at("embed.tokens").value.row(static_cast<std::size_t>(token));
      const auto pe = params_.at("embed.target_positions").value.row(pos);
      for (std::size_t j = 0; j < d; ++j) x.data[j] = e[j];
      for (std::size_t j = 0; j < d; ++j) x.data[j] += pe[j];
    }
    Matrix<T> h, q, a, probs_buf;
    for (std::size_t l = 0; l < cfg_.num_decoder_layers; ++l) {
      const std::string self = detail::layer_name("dec", l, "self");
      norm(x, detail::layer_name("dec", l, "self_norm"), h);
      q = project(h, self, "wq", "bq");
      append_row(s.self_k[l], project(h, self, "wk", "bk"));
      append_row(s.self_v[l], project(h, self, "wv", "bv"));
      attend(q, s.self_k[l], s.self_v[l], nullptr, a);
      add_into(x, project(a, self, "wo", "bo"));

      const std::string cross = detail::layer_name("dec", l, "cross");
      norm(x, detail::layer_name("dec", l, "cross_norm"), h);
      q = project(h, cross, "wq", "bq");
      attend(q, cross_k_[l], cross_v_[l], mask_.empty() ? nullptr : &mask_, a);
      add_into(x, project(a, cross, "wo", "bo"));

      const std::string ffn = detail::layer_name("dec", l, "ffn");
      norm(x, detail::layer_name("dec", l, "ffn_norm"), h);
      Matrix<T> u = project(h, ffn, "w1", "b1");
      for (T& v : u.data) v = kernels::gelu(v);
      add_into(x, project(u, ffn, "w2", "b2"));
    }
    norm(x, "dec.final_norm", h);
    Matrix<T> logits;
    if (cfg_.tie_embeddings)
      kernels::matmul_nt(h, params_.at("embed.tokens").value, logits);
    else
      kernels::matmul(h, params_.at("output.weight").value, logits);
    kernels::add_row_bias(logits, params_.at("output.bias").value);
    Matrix<T> lp;
    kernels::log_softmax(logits, lp);
    s.next_log_probs.assign(lp.data.begin(), lp.data.end());
    s.length = pos + 1;
    return s;
  }

 private:
  Matrix<T> project(const Matrix<T>& x, const std::string& prefix, const char* w,
                    const char* b) const {
    Matrix<T> y;
    kernels::matmul(x, params_.at(prefix + "." + w).value, y);
    kernels::add_row_bias(y, params_.at(prefix + "." + b).value);
    return y;
  }

  void norm(const Matrix<T>& x, const std::string& prefix, Matrix<T>& y) const {
    kernels::layer_norm(x, params_.at(prefix + ".gain").value, params_.at(prefix + ".bias").value,
                        y, static_cast<std::vector<T>*>(nullptr), static_cast<std::vector<T>*>(nullptr));
  }

  void attend(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
              const std::vector<bool>* mask, Matrix<T>& out) const {
    out = Matrix<T>(1, cfg_.model_dim);
    std::vector<T> probs(cfg_.num_heads * k.rows);
    kernels::attend_row<T>(q.row(0), k, v, cfg_.num_heads, k.rows, mask, out.row(0), probs);
  }

  static void append_row(Matrix<T>& m, const Matrix<T>& r) {
    m.data.insert(m.data.end(), r.data.begin(), r.data.end());
    ++m.rows;
  }

  static void add_into(Matrix<T>& x, const Matrix<T>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += y.data[i];
  }

  const ModelParams<T>& params_;
  ModelConfig cfg_;
  std::vector<int> source_;
  Matrix<T> memory_;
  std::vector<bool> mask_;
  std::vector<Matrix<T>> cross_k_, cross_v_;
};

}  // namespace brio
