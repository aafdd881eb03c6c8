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

// Writes the synthetic lead-sentence corpus as JSON lines.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "brio/toy_corpus.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic lead-sentence summarization corpus"};
  brio::ToyCorpusConfig cfg;
  std::string out;
  std::uint64_t seed = 1;
  app.add_option("-o,--out", out, "Output JSONL path")->required();
  app.add_option("-n,--documents", cfg.documents, "Number of documents")->capture_default_str();
  app.add_option("--seed", seed, "Generator seed")->capture_default_str();
  app.add_option("--lexicon", cfg.lexicon_size, "Number of distinct pseudo-words")->capture_default_str();
  app.add_option("--replace-rate", cfg.replace_rate, "Summary word substitution rate")->capture_default_str();
  app.add_option("--drop-rate", cfg.drop_rate, "Summary word drop rate")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    brio::write_corpus(out, brio::make_toy_corpus(cfg, seed));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
