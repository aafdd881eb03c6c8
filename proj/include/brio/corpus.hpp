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
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "brio/rng.hpp"

namespace brio {

namespace special {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kCount = 4;
}  // namespace special

struct Document {
  std::string id;
  std::string source_text;
  std::string reference_summary;
  std::optional<std::string> category;

  bool operator==(const Document&) const = default;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

inline std::string require_string(const nlohmann::json& rec, const char* key,
                                   std::size_t line_no) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_string())
    throw CorpusError("line " + std::to_string(line_no) + ": missing string field \"" +
                      key + "\"");
  return it->get<std::string>();
}

}  // namespace detail

/// Parses one JSON object per line: id, document, summary, optional category.
inline std::vector<Document> parse_corpus(std::istream& in) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": malformed record (" + e.what() +
                        ")");
    }
    if (!rec.is_object())
      throw CorpusError("line " + std::to_string(line_no) + ": record is not an object");
    Document d;
    d.id = detail::require_string(rec, "id", line_no);
    d.source_text = detail::require_string(rec, "document", line_no);
    d.reference_summary = detail::require_string(rec, "summary", line_no);
    if (auto it = rec.find("category"); it != rec.end() && !it->is_null()) {
      if (!it->is_string())
        throw CorpusError("line " + std::to_string(line_no) + ": category must be a string");
      d.category = it->get<std::string>();
    }
    if (detail::is_blank(d.source_text))
      throw CorpusError("line " + std::to_string(line_no) + ": empty document");
    if (detail::is_blank(d.reference_summary))
      throw CorpusError("line " + std::to_string(line_no) + ": empty summary");
    if (!seen.insert(d.id).second)
      throw CorpusError("line " + std::to_string(line_no) + ": duplicate id \"" + d.id + "\"");
    docs.push_back(std::move(d));
  }
  return docs;
}

inline std::vector<Document> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  return parse_corpus(in);
}

inline void write_corpus(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file: " + path);
  for (const auto& d : docs) {
    nlohmann::json rec{{"id", d.id}, {"document", d.source_text}, {"summary", d.reference_summary}};
    if (d.category) rec["category"] = *d.category;
    out << rec.dump() << '\n';
  }
}

/// Lowercased whitespace tokens with every ASCII punctuation character split
/// off as its own token. Non-ASCII bytes pass through unchanged.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  flush();
  return out;
}

class Vocabulary {
 public:
  Vocabulary() : id_to_token_{"<pad>", "<s>", "</s>", "<unk>"} { rebuild_index(); }

  /// Vocabulary over `tokens` appended after the four reserved entries.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const auto& t : tokens) {
      if (v.token_to_id_.count(t)) throw CorpusError("vocabulary: duplicate token \"" + t + "\"");
      v.token_to_id_.emplace(t, static_cast<int>(v.id_to_token_.size()));
      v.id_to_token_.push_back(t);
    }
    return v;
  }

  std::size_t size() const { return id_to_token_.size(); }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? special::kUnk : it->second;
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
      throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  /// Regular (non-reserved) tokens in id order.
  std::vector<std::string> regular_tokens() const {
    return {id_to_token_.begin() + special::kCount, id_to_token_.end()};
  }

  bool operator==(const Vocabulary& o) const { return id_to_token_ == o.id_to_token_; }

 private:
  void rebuild_index() {
    token_to_id_.clear();
    for (std::size_t i = 0; i < id_to_token_.size(); ++i)
      token_to_id_.emplace(id_to_token_[i], static_cast<int>(i));
  }

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

/// Frequency-ranked vocabulary (ties lexicographic), capped at `max_size`
/// entries including the reserved ones. Tokens seen fewer than `min_count`
/// times are left out and encode to UNK.
inline Vocabulary build_vocab(const std::vector<Document>& docs, std::size_t max_size,
                              std::size_t min_count = 1) {
  if (max_size < special::kCount + 1)
    throw std::invalid_argument("build_vocab: max_size must be at least 5");
  if (docs.empty()) throw CorpusError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& d : docs) {
    for (auto& t : tokenize(d.source_text)) ++counts[t];
    for (auto& t : tokenize(d.reference_summary)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts)
    if (n >= min_count) ranked.emplace_back(tok, n);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size - special::kCount) ranked.resize(max_size - special::kCount);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary::from_tokens(tokens);
}

inline void save_vocab(const std::string& path, const Vocabulary& v) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write vocabulary: " + path);
  for (const auto& t : v.regular_tokens()) out << t << '\n';
}

inline Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open vocabulary: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary::from_tokens(tokens);
}

inline std::vector<int> encode_tokens(const std::vector<std::string>& tokens,
                                      const Vocabulary& vocab, std::size_t max_len,
                                      bool add_bos_eos) {
  std::vector<int> ids;
  if (add_bos_eos) {
    if (max_len < 2) throw std::invalid_argument("encode: max_len must be >= 2 with BOS/EOS");
    ids.push_back(special::kBos);
    for (std::size_t i = 0; i < tokens.size() && ids.size() + 1 < max_len; ++i)
      ids.push_back(vocab.id(tokens[i]));
    ids.push_back(special::kEos);
  } else {
    for (std::size_t i = 0; i < tokens.size() && ids.size() < max_len; ++i)
      ids.push_back(vocab.id(tokens[i]));
  }
  return ids;
}

inline std::vector<int> encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len,
                               bool add_bos_eos) {
  return encode_tokens(tokenize(text), vocab, max_len, add_bos_eos);
}

/// Surface tokens of an id sequence: reserved ids dropped, stops at first EOS.
inline std::vector<std::string> id_tokens(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == special::kEos) break;
    if (id == special::kBos || id == special::kPad) continue;
    out.push_back(tok);
  }
  return out;
}

inline std::string decode_tokens(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (const auto& t : id_tokens(ids, vocab)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

struct TokenizedExample {
  std::string doc_id;
  std::vector<int> source_ids;
  std::vector<int> target_ids;
  // Reference summary tokens before vocabulary mapping; ROUGE scores against
  // these so out-of-vocabulary words are never matched by UNK.
  std::vector<std::string> reference_tokens;
};

inline TokenizedExample tokenize_document(const Document& d, const Vocabulary& vocab,
                                          std::size_t max_source_len,
                                          std::size_t max_target_len) {
  TokenizedExample ex;
  ex.doc_id = d.id;
  ex.source_ids = encode(d.source_text, vocab, max_source_len, false);
  if (ex.source_ids.empty()) ex.source_ids.push_back(special::kUnk);
  ex.reference_tokens = tokenize(d.reference_summary);
  ex.target_ids = encode_tokens(ex.reference_tokens, vocab, max_target_len, true);
  return ex;
}

inline std::vector<TokenizedExample> tokenize_documents(const std::vector<Document>& docs,
                                                        const Vocabulary& vocab,
                                                        std::size_t max_source_len,
                                                        std::size_t max_target_len) {
  std::vector<TokenizedExample> out;
  out.reserve(docs.size());
  for (const auto& d : docs)
    out.push_back(tokenize_document(d, vocab, max_source_len, max_target_len));
  return out;
}

struct CorpusSplit {
  std::vector<Document> train;
  std::vector<Document> validation;
  std::vector<Document> test;
};

inline constexpr std::array<std::size_t, 3> kSplitPercent{75, 8, 17};

/// Largest-remainder apportionment of n over the 75/8/17 ratio. Ties in the
/// remainder go to the earlier split.
inline std::array<std::size_t, 3> split_sizes(std::size_t n) {
  std::array<std::size_t, 3> size{}, rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    size[i] = n * kSplitPercent[i] / 100;
    rem[i] = n * kSplitPercent[i] % 100;
    assigned += size[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++size[order[k]];
  return size;
}

inline constexpr std::size_t kMinSplitDocuments = 13;

inline CorpusSplit split_corpus(const std::vector<Document>& docs, std::uint64_t seed) {
  if (docs.size() < kMinSplitDocuments)
    throw CorpusError("split_corpus: need at least " + std::to_string(kMinSplitDocuments) +
                      " documents, got " + std::to_string(docs.size()));
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(seed, /*stream=*/1);
  shuffle(order, rng);
  const auto sizes = split_sizes(docs.size());
  CorpusSplit s;
  std::size_t k = 0;
  for (; k < sizes[0]; ++k) s.train.push_back(docs[order[k]]);
  for (; k < sizes[0] + sizes[1]; ++k) s.validation.push_back(docs[order[k]]);
  for (; k < docs.size(); ++k) s.test.push_back(docs[order[k]]);
  return s;
}

/// Seeded random subsample of at most `max_documents` (0 keeps everything),
/// preserving file order among the kept documents.
inline std::vector<Document> subsample(const std::vector<Document>& docs,
                                       std::size_t max_documents, std::uint64_t seed) {
  if (max_documents == 0 || max_documents >= docs.size()) return docs;
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(seed, /*stream=*/2);
  shuffle(order, rng);
  order.resize(max_documents);
  std::sort(order.begin(), order.end());
  std::vector<Document> out;
  for (std::size_t i : order) out.push_back(docs[i]);
  return out;
}

}  // namespace brio
