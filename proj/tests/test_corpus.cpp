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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "brio/corpus.hpp"
#include "test_util.hpp"

namespace brio {
namespace {

std::vector<Document> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const CorpusError& e) {
    return e.what();
  }
  return "";
}

std::vector<Document> numbered(std::size_t n) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n; ++i)
    docs.push_back({"id" + std::to_string(i), "doc " + std::to_string(i), "sum", std::nullopt});
  return docs;
}

std::set<std::string> ids(const std::vector<Document>& docs) {
  std::set<std::string> out;
  for (const auto& d : docs) out.insert(d.id);
  return out;
}

TEST(Corpus, ParsesRecordsInOrder) {
  const auto docs = parse(
      R"({"id":"a","document":"One two.","summary":"One."})"
      "\n\n"
      R"({"id":"b","document":"Three.","summary":"Three.","category":"news"})"
      "\n"
      R"({"id":"c","document":"Four.","summary":"Four.","category":null})"
      "\n");
  ASSERT_EQ(docs.size(), 3u);
  EXPECT_EQ(docs[0].id, "a");
  EXPECT_EQ(docs[1].id, "b");
  EXPECT_EQ(docs[2].id, "c");
  EXPECT_EQ(docs[1].category, "news");
  EXPECT_FALSE(docs[2].category.has_value());
}

TEST(Corpus, MissingSummaryNamesTheLine) {
  const std::string msg = error_of(
      R"({"id":"a","document":"x","summary":"y"})"
      "\n"
      R"({"id":"b","document":"x"})"
      "\n");
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("summary"), std::string::npos) << msg;
}

TEST(Corpus, RejectsBadRecords) {
  EXPECT_NE(error_of(R"({"id":"a1","document":"x","summary":"y"})"
                     "\n"
                     R"({"id":"a1","document":"z","summary":"w"})")
                .find("duplicate id"),
            std::string::npos);
  EXPECT_NE(error_of("{not json}\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of(R"({"id":"a","document":"  ","summary":"y"})").find("empty document"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"id":"a","document":"x","summary":""})").find("empty summary"),
            std::string::npos);
  EXPECT_NE(error_of("[1,2]").find("not an object"), std::string::npos);
  EXPECT_THROW(load_corpus("/nonexistent/corpus.jsonl"), CorpusError);
}

TEST(Corpus, WriteThenLoadRoundTrips) {
  const auto path = std::filesystem::temp_directory_path() / "brio_corpus_roundtrip.jsonl";
  auto docs = testing::copy_corpus(5, 3);
  docs[1].category = "sport";
  write_corpus(path.string(), docs);
  const auto back = load_corpus(path.string());
  ASSERT_EQ(back.size(), docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    EXPECT_EQ(back[i].id, docs[i].id);
    EXPECT_EQ(back[i].source_text, docs[i].source_text);
    EXPECT_EQ(back[i].reference_summary, docs[i].reference_summary);
    EXPECT_EQ(back[i].category, docs[i].category);
  }
  std::filesystem::remove(path);
}

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(tokenize("The cat, sat."), (std::vector<std::string>{"the", "cat", ",", "sat", "."}));
  EXPECT_EQ(tokenize("  "), std::vector<std::string>{});
  EXPECT_EQ(tokenize("don't"), (std::vector<std::string>{"don", "'", "t"}));
}

TEST(Vocab, FrequencyOrderWithReservedPrefix) {
  const Vocabulary v = build_vocab({{"d", "a a b", "a", std::nullopt}}, 10);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.token(special::kPad), "<pad>");
  EXPECT_EQ(v.token(special::kBos), "<s>");
  EXPECT_EQ(v.token(special::kEos), "</s>");
  EXPECT_EQ(v.token(special::kUnk), "<unk>");
  EXPECT_LT(v.id("a"), v.id("b"));
  EXPECT_EQ(v.id("a"), 4);
}

TEST(Vocab, TiesBreakLexicographicallyAndCapApplies) {
  const Vocabulary v = build_vocab({{"d", "z y x x", "w", std::nullopt}}, 6);
  EXPECT_EQ(v.regular_tokens(), (std::vector<std::string>{"x", "w"}));
}

TEST(Vocab, RejectsTooSmallOrEmpty) {
  EXPECT_THROW(build_vocab({{"d", "a", "a", std::nullopt}}, 4), std::invalid_argument);
  EXPECT_THROW(build_vocab({}, 10), CorpusError);
}

TEST(Vocab, RareTokensEncodeToUnk) {
  const Vocabulary v = build_vocab({{"d", "a a b", "a", std::nullopt}}, 10, /*min_count=*/2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(encode("b a", v, 10, false), (std::vector<int>{special::kUnk, v.id("a")}));
}

TEST(Vocab, SaveLoadRoundTrips) {
  const auto path = std::filesystem::temp_directory_path() / "brio_vocab.txt";
  const Vocabulary v = build_vocab(testing::copy_corpus(20, 1), 50);
  save_vocab(path.string(), v);
  EXPECT_EQ(load_vocab(path.string()), v);
  std::filesystem::remove(path);
}

TEST(Encode, FramesTruncatesAndMapsUnknowns) {
  const Vocabulary v = Vocabulary::from_tokens({"a", "b"});
  EXPECT_EQ(encode("a b", v, 10, true), (std::vector<int>{special::kBos, 4, 5, special::kEos}));
  EXPECT_EQ(encode("a zzz b", v, 10, false), (std::vector<int>{4, special::kUnk, 5}));
  std::string long_text;
  for (int i = 0; i < 100; ++i) long_text += "a ";
  const auto ids = encode(long_text, v, 10, true);
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_EQ(ids.front(), special::kBos);
  EXPECT_EQ(ids.back(), special::kEos);
  EXPECT_EQ(encode(long_text, v, 7, false).size(), 7u);
  EXPECT_THROW(encode("a", v, 1, true), std::invalid_argument);
}

TEST(Decode, InvertsEncodeAndStopsAtEos) {
  const Vocabulary v = Vocabulary::from_tokens({"a", "b"});
  EXPECT_EQ(decode_tokens({special::kBos, 4, 5, special::kEos}, v), "a b");
  EXPECT_EQ(decode_tokens({special::kBos, special::kEos}, v), "");
  EXPECT_EQ(decode_tokens({special::kBos, 4, special::kEos, 5}, v), "a");
  EXPECT_THROW(decode_tokens({special::kBos, 99}, v), std::out_of_range);
}

TEST(Split, SizesFollowRatios) {
  EXPECT_EQ(split_sizes(1000), (std::array<std::size_t, 3>{750, 80, 170}));
  EXPECT_EQ(split_sizes(100), (std::array<std::size_t, 3>{75, 8, 17}));
  for (std::size_t n = 13; n < 400; ++n) {
    const auto s = split_sizes(n);
    EXPECT_EQ(s[0] + s[1] + s[2], n);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_GE(s[i], 1u) << n;
  }
}

TEST(Split, PartitionIsDisjointAndCovering) {
  const auto docs = numbered(100);
  const CorpusSplit s = split_corpus(docs, 7);
  EXPECT_EQ(s.train.size(), 75u);
  EXPECT_EQ(s.validation.size(), 8u);
  EXPECT_EQ(s.test.size(), 17u);
  std::set<std::string> all = ids(s.train);
  for (const auto& part : {s.validation, s.test})
    for (const auto& d : part) EXPECT_TRUE(all.insert(d.id).second);
  EXPECT_EQ(all, ids(docs));
}

TEST(Split, SeedChangesMembershipNotSizes) {
  const auto docs = numbered(100);
  const CorpusSplit a = split_corpus(docs, 7), b = split_corpus(docs, 8), a2 = split_corpus(docs, 7);
  EXPECT_EQ(a.train.size(), b.train.size());
  EXPECT_NE(ids(a.train), ids(b.train));
  EXPECT_EQ(ids(a.train), ids(a2.train));
  EXPECT_EQ(ids(a.test), ids(a2.test));
}

TEST(Split, TooFewDocuments) {
  EXPECT_THROW(split_corpus(numbered(12), 1), CorpusError);
  EXPECT_NO_THROW(split_corpus(numbered(13), 1));
}

TEST(Subsample, KeepsFileOrderAndIsSeeded) {
  const auto docs = numbered(50);
  const auto a = subsample(docs, 20, 3);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 1; i < a.size(); ++i)
    EXPECT_LT(std::stoi(a[i - 1].id.substr(2)), std::stoi(a[i].id.substr(2)));
  EXPECT_EQ(ids(a), ids(subsample(docs, 20, 3)));
  EXPECT_NE(ids(a), ids(subsample(docs, 20, 4)));
  EXPECT_EQ(subsample(docs, 0, 3).size(), 50u);
  EXPECT_EQ(subsample(docs, 80, 3).size(), 50u);
}

TEST(TokenizeDocument, KeepsSurfaceReferenceTokens) {
  const Vocabulary v = Vocabulary::from_tokens({"a", "."});
  const TokenizedExample ex = tokenize_document({"x", "a b .", "a zz .", std::nullopt}, v, 8, 8);
  EXPECT_EQ(ex.source_ids, (std::vector<int>{4, special::kUnk, 5}));
  EXPECT_EQ(ex.target_ids, (std::vector<int>{special::kBos, 4, special::kUnk, 5, special::kEos}));
  EXPECT_EQ(ex.reference_tokens, (std::vector<std::string>{"a", "zz", "."}));
}

}  // namespace
}  // namespace brio
