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

// Experiment harness: runs pipeline stages against an output directory.
//
//   brio_cli <stage> --config exp.ini [--seed N] [--out DIR] [--force]

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "brio/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Toy abstractive summarization pipeline with contrastive candidate ranking"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
  bool quiet = false;
  app.add_option("--config", config_path, "Experiment config (INI)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override experiment.seed");
  app.add_option("--out", out_dir, "Override experiment.output_dir");
  app.add_flag("--force", force, "Rerun stages even when their artifacts are current");
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  struct Cmd {
    const char* name;
    const char* help;
  };
  const std::vector<Cmd> cmds = {
      {"split", "Subsample, split 75/8/17 and build the vocabulary"},
      {"finetune", "MLE fine-tuning with Adam"},
      {"gen-cands", "Generate ranked candidate summaries with diverse beam search"},
      {"brio", "Train with MLE plus contrastive ranking on the candidates"},
      {"loop", "Regenerate candidates and retrain for the remaining loop iterations"},
      {"evaluate", "Score every system on the test split"},
      {"report", "Write the ROUGE report tables"},
      {"all", "Run every stage in order"},
  };
  for (const auto& c : cmds) app.add_subcommand(c.name, c.help)->fallthrough();

  CLI11_PARSE(app, argc, argv);

  const std::string cmd = app.get_subcommands().front()->get_name();
  std::vector<brio::Stage> stages;
  if (cmd == "all")
    stages.assign(std::begin(brio::kAllStages), std::end(brio::kAllStages));
  else
    stages.push_back(brio::parse_stage(cmd));

  try {
    brio::ExperimentConfig cfg;
    try {
      cfg = brio::load_config(config_path);
    } catch (const std::exception& e) {
      throw brio::PipelineError(stages.front(), e.what());
    }
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    brio::run_pipeline(cfg, stages, {force, quiet ? nullptr : &std::cerr});
  } catch (const brio::PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: stage " << cmd << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
