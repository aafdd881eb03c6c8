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

// Stage orchestration over an output directory. Every stage reads its
// predecessor's artifacts and stamps its own with a config hash:
//
//   split      split.json, vocab.txt
//   finetune   init.ckpt, finetune.ckpt, finetune_metrics.jsonl
//   gen-cands  cands_iter1.jsonl, cands_heldout.jsonl
//   brio       brio.ckpt, brio_metrics.jsonl
//   loop       cands_iter<k>.jsonl (k >= 2), loop.ckpt, loop_metrics.jsonl
//   evaluate   eval.json
//   report     report.txt, report.csv

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "brio/brio.hpp"
#include "brio/candidate_cache.hpp"
#include "brio/checkpoint.hpp"
#include "brio/config.hpp"
#include "brio/corpus.hpp"
#include "brio/evaluate.hpp"
#include "brio/report.hpp"

namespace brio {

enum class Stage { kSplit, kFinetune, kGenCands, kBrio, kLoop, kEvaluate, kReport };

inline constexpr Stage kAllStages[] = {Stage::kSplit, Stage::kFinetune, Stage::kGenCands,
                                       Stage::kBrio,  Stage::kLoop,     Stage::kEvaluate,
                                       Stage::kReport};

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kSplit: return "split";
    case Stage::kFinetune: return "finetune";
    case Stage::kGenCands: return "gen-cands";
    case Stage::kBrio: return "brio";
    case Stage::kLoop: return "loop";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "?";
}

inline Stage parse_stage(const std::string& name) {
  for (Stage s : kAllStages)
    if (name == stage_name(s)) return s;
  throw std::invalid_argument("unknown stage '" + name + "'");
}

class PipelineError : public std::runtime_error {
 public:
  PipelineError(Stage stage, const std::string& what)
      : std::runtime_error(std::string("stage ") + stage_name(stage) + ": " + what), stage_(stage) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct PipelineOptions {
  bool force = false;
  std::ostream* log = nullptr;
};

namespace detail {

namespace fs = std::filesystem;

struct Workspace {
  ExperimentConfig cfg;
  StageHashes hashes;
  PipelineOptions opts;
  fs::path dir;

  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string cands(std::size_t k) const { return path("cands_iter" + std::to_string(k) + ".jsonl"); }

  void log(const std::string& line) const {
    if (opts.log) *opts.log << line << std::endl;
  }
};

struct LoadedData {
  Vocabulary vocab;
  LoopData data;
  ModelConfig model;
};

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

/// Hash stamped into an artifact, whatever its kind.
inline std::string artifact_hash(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".ckpt") return load_checkpoint(path).config_hash;
  if (ext == ".jsonl") {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    return nlohmann::json::parse(line).at("config_hash").get<std::string>();
  }
  return read_json(path).at("config_hash").get<std::string>();
}

/// True when `path` exists and was produced by the current config. A stale
/// artifact is refused; forcing reruns the stage either way.
inline bool up_to_date(const Workspace& ws, Stage stage, const std::string& path,
                       const std::string& expected) {
  if (ws.opts.force || !fs::exists(path)) return false;
  const std::string got = artifact_hash(path);
  if (got == expected) return true;
  throw PipelineError(stage, fs::path(path).filename().string() +
                                 " was produced by a different configuration (hash " + got +
                                 ", expected " + expected + "); rerun with --force to overwrite");
}

/// Checks that a predecessor artifact exists and matches the current config.
inline void need(const Workspace& ws, Stage stage, Stage producer, const std::string& path,
                 const std::string& expected) {
  if (!fs::exists(path))
    throw PipelineError(stage, "missing " + fs::path(path).filename().string() + " from stage '" +
                                   stage_name(producer) + "'; run '" + stage_name(producer) +
                                   "' first");
  const std::string got = artifact_hash(path);
  if (got != expected && !ws.opts.force)
    throw PipelineError(stage, fs::path(path).filename().string() + " from stage '" +
                                   stage_name(producer) +
                                   "' was produced by a different configuration; rerun '" +
                                   stage_name(producer) + "' or pass --force");
}

inline LoadedData load_data(const Workspace& ws, Stage stage) {
  need(ws, stage, Stage::kSplit, ws.path("split.json"), ws.hashes.split);
  if (!fs::exists(ws.path("vocab.txt")))
    throw PipelineError(stage, "missing vocab.txt from stage 'split'; run 'split' first");
  LoadedData out{load_vocab(ws.path("vocab.txt")), {}, ws.cfg.model};
  out.model.vocab_size = out.vocab.size();
  const auto docs = load_corpus(ws.cfg.corpus_path.string());
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : docs) by_id[d.id] = &d;
  const auto split = read_json(ws.path("split.json"));
  auto pick = [&](const char* key) {
    std::vector<Document> sel;
    for (const auto& id : split.at(key)) {
      auto it = by_id.find(id.get<std::string>());
      if (it == by_id.end()) throw PipelineError(stage, "split.json names unknown document " + id.dump());
      sel.push_back(*it->second);
    }
    return tokenize_documents(sel, out.vocab, out.model.max_source_len, out.model.max_target_len);
  };
  out.data.train = pick("train");
  out.data.validation = pick("validation");
  out.data.test = pick("test");
  return out;
}

inline ModelParams<float> load_params(const Workspace& ws, Stage stage, Stage producer,
                                      const std::string& file, const std::string& hash,
                                      const ModelConfig& model) {
  need(ws, stage, producer, ws.path(file), hash);
  try {
    return load_checkpoint(ws.path(file), model).params;
  } catch (const CheckpointError& e) {
    throw PipelineError(stage, e.what());
  }
}

inline nlohmann::json step_json(const StepRecord& r) {
  return {{"type", "step"}, {"stage", r.stage}, {"epoch", r.epoch}, {"step", r.step},
          {"lr", r.learning_rate}, {"loss", r.loss}, {"mle", r.mle}, {"contrastive", r.contrastive}};
}

inline nlohmann::json means_json(const rouge::RougeMeans& m) {
  return {{"r1", m.r1}, {"r2", m.r2}, {"rl", m.rl}};
}

inline rouge::RougeMeans means_from_json(const nlohmann::json& j) {
  return {j.at("r1").get<double>(), j.at("r2").get<double>(), j.at("rl").get<double>()};
}

inline void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& records) {
  std::string text;
  for (const auto& r : records) text += r.dump() + '\n';
  write_text(path, text);
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

// ---------------------------------------------------------------------------

inline void run_split(const Workspace& ws) {
  if (up_to_date(ws, Stage::kSplit, ws.path("split.json"), ws.hashes.split) &&
      fs::exists(ws.path("vocab.txt")))
    return ws.log("[split] up to date");
  const auto docs = load_corpus(ws.cfg.corpus_path.string());
  const auto kept = subsample(docs, ws.cfg.max_documents, ws.cfg.seed);
  const CorpusSplit split = split_corpus(kept, ws.cfg.seed);
  const Vocabulary vocab = build_vocab(split.train, ws.cfg.vocab_max_size, ws.cfg.min_count);
  auto ids = [](const std::vector<Document>& d) {
    std::vector<std::string> out;
    for (const auto& x : d) out.push_back(x.id);
    return out;
  };
  save_vocab(ws.path("vocab.txt"), vocab);
  write_text(ws.path("split.json"), nlohmann::json{{"config_hash", ws.hashes.split},
                                                   {"seed", ws.cfg.seed},
                                                   {"train", ids(split.train)},
                                                   {"validation", ids(split.validation)},
                                                   {"test", ids(split.test)}}
                                            .dump(1) + "\n");
  ws.log("[split] " + std::to_string(split.train.size()) + "/" +
         std::to_string(split.validation.size()) + "/" + std::to_string(split.test.size()) +
         " documents, vocabulary " + std::to_string(vocab.size()));
}

inline void run_finetune(const Workspace& ws) {
  const Stage st = Stage::kFinetune;
  if (up_to_date(ws, st, ws.path("finetune.ckpt"), ws.hashes.finetune) &&
      up_to_date(ws, st, ws.path("init.ckpt"), ws.hashes.finetune))
    return ws.log("[finetune] up to date");
  const LoadedData d = load_data(ws, st);
  const ModelParams<float> init = init_params<float>(d.model, ws.cfg.seed);
  save_checkpoint(ws.path("init.ckpt"), init, ws.hashes.finetune);
  auto result = finetune_stage(init, d.data.train, d.data.validation, d.vocab, ws.cfg.finetune,
                               ws.cfg.brio.decode, ws.cfg.seed, ws.cfg.threads);
  std::vector<nlohmann::json> records{{{"config_hash", ws.hashes.finetune}, {"stage", "finetune"}}};
  for (const auto& s : result.steps) records.push_back(step_json(s));
  for (const auto& e : result.epochs) {
    records.push_back({{"type", "epoch"}, {"epoch", e.epoch}, {"train_loss", e.train_loss},
                       {"val_quality", e.val_quality}});
    ws.log("[finetune] epoch " + std::to_string(e.epoch) + " train_loss " +
           std::to_string(e.train_loss) + " val_quality " + std::to_string(e.val_quality));
  }
  records.push_back({{"type", "summary"}, {"best_epoch", result.best_epoch},
                     {"best_val_quality", result.best_val_quality}});
  write_jsonl(ws.path("finetune_metrics.jsonl"), records);
  save_checkpoint(ws.path("finetune.ckpt"), result.params, ws.hashes.finetune);
}

inline void run_gen_cands(const Workspace& ws) {
  const Stage st = Stage::kGenCands;
  if (up_to_date(ws, st, ws.cands(1), ws.hashes.candidates) &&
      up_to_date(ws, st, ws.path("cands_heldout.jsonl"), ws.hashes.candidates))
    return ws.log("[gen-cands] up to date");
  const LoadedData d = load_data(ws, st);
  const auto ft = load_params(ws, st, Stage::kFinetune, "finetune.ckpt", ws.hashes.finetune, d.model);
  const auto train = generate_candidate_sets(ft, d.data.train, d.vocab, ws.cfg.brio, ws.cfg.threads);
  const auto held = generate_candidate_sets(ft, d.data.test, d.vocab, ws.cfg.brio, ws.cfg.threads);
  write_candidate_cache(ws.cands(1), {ws.hashes.candidates, 1, "train"}, train);
  write_candidate_cache(ws.path("cands_heldout.jsonl"), {ws.hashes.candidates, 0, "test"}, held);
  ws.log("[gen-cands] " + std::to_string(train.size()) + " training and " +
         std::to_string(held.size()) + " held-out candidate sets");
}

inline nlohmann::json iteration_json(const IterationReport& r) {
  return {{"type", "iteration"}, {"iteration", r.iteration}, {"val_quality", r.val_quality},
          {"test", means_json(r.test)}, {"mle_only_documents", r.mle_only_documents}};
}

inline void run_brio(const Workspace& ws) {
  const Stage st = Stage::kBrio;
  if (up_to_date(ws, st, ws.path("brio.ckpt"), ws.hashes.brio) &&
      up_to_date(ws, st, ws.path("brio_metrics.jsonl"), ws.hashes.brio))
    return ws.log("[brio] up to date");
  const LoadedData d = load_data(ws, st);
  const auto ft = load_params(ws, st, Stage::kFinetune, "finetune.ckpt", ws.hashes.finetune, d.model);
  need(ws, st, Stage::kGenCands, ws.cands(1), ws.hashes.candidates);
  need(ws, st, Stage::kGenCands, ws.path("cands_heldout.jsonl"), ws.hashes.candidates);
  const auto train = read_candidate_cache(ws.cands(1));
  const auto held = read_candidate_cache(ws.path("cands_heldout.jsonl"));
  auto out = brio_iteration(ft, ft, d.data, d.vocab, ws.cfg.brio, ws.cfg.seed, 1, ws.cfg.threads, &train);
  const double alpha = ws.cfg.brio.length_penalty;
  const TauSummary before = mean_kendall_tau(ft, held, alpha, ws.cfg.threads);
  const TauSummary after = mean_kendall_tau(out.params, held, alpha, ws.cfg.threads);
  const auto ft_test = evaluate(ft, d.data.test, d.vocab, ws.cfg.brio.decode, ws.cfg.threads).means;
  std::vector<nlohmann::json> records{{{"config_hash", ws.hashes.brio}, {"stage", "brio"}}};
  for (const auto& s : out.report.steps) records.push_back(step_json(s));
  records.push_back(iteration_json(out.report));
  records.push_back({{"type", "summary"},
                     {"finetuned_test", means_json(ft_test)},
                     {"heldout_tau_finetuned", before.mean},
                     {"heldout_tau_brio", after.mean},
                     {"heldout_tau_sets", after.sets},
                     {"mle_only_documents", out.report.mle_only_documents}});
  write_jsonl(ws.path("brio_metrics.jsonl"), records);
  save_checkpoint(ws.path("brio.ckpt"), out.params, ws.hashes.brio);
  ws.log("[brio] held-out tau " + std::to_string(before.mean) + " -> " + std::to_string(after.mean) +
         ", test R-1 " + std::to_string(ft_test.r1) + " -> " + std::to_string(out.report.test.r1) +
         ", " + std::to_string(out.report.mle_only_documents) + " MLE-only documents");
}

inline void run_loop(const Workspace& ws) {
  const Stage st = Stage::kLoop;
  if (up_to_date(ws, st, ws.path("loop.ckpt"), ws.hashes.loop) &&
      up_to_date(ws, st, ws.path("loop_metrics.jsonl"), ws.hashes.loop))
    return ws.log("[loop] up to date");
  const LoadedData d = load_data(ws, st);
  const BrioConfig& bc = ws.cfg.brio;
  const auto ft = load_params(ws, st, Stage::kFinetune, "finetune.ckpt", ws.hashes.finetune, d.model);
  std::vector<nlohmann::json> records{{{"config_hash", ws.hashes.loop}, {"stage", "loop"}}};
  ModelParams<float> best = ft;
  std::size_t best_iteration = 0;
  if (bc.loop_iterations >= 1) {
    ModelParams<float> current =
        load_params(ws, st, Stage::kBrio, "brio.ckpt", ws.hashes.brio, d.model);
    need(ws, st, Stage::kBrio, ws.path("brio_metrics.jsonl"), ws.hashes.brio);
    double best_val = -1;
    for (const auto& r : read_jsonl(ws.path("brio_metrics.jsonl")))
      if (r.value("type", "") == "iteration") {
        records.push_back(r);
        best_val = r.at("val_quality").get<double>();
      }
    best = current;
    best_iteration = 1;
    for (std::size_t it = 2; it <= bc.loop_iterations; ++it) {
      const ModelParams<float>& start = bc.restart_from_finetuned ? ft : current;
      auto out = brio_iteration(current, start, d.data, d.vocab, bc, ws.cfg.seed, it, ws.cfg.threads);
      write_candidate_cache(ws.cands(it), {ws.hashes.loop, it, "train"}, out.report.candidates);
      for (const auto& s : out.report.steps) records.push_back(step_json(s));
      records.push_back(iteration_json(out.report));
      ws.log("[loop] iteration " + std::to_string(it) + " val_quality " +
             std::to_string(out.report.val_quality) + " test R-1 " + std::to_string(out.report.test.r1));
      current = std::move(out.params);
      if (out.report.val_quality > best_val) {
        best_val = out.report.val_quality;
        best = current;
        best_iteration = it;
      }
    }
  }
  records.push_back({{"type", "summary"}, {"best_iteration", best_iteration}});
  write_jsonl(ws.path("loop_metrics.jsonl"), records);
  save_checkpoint(ws.path("loop.ckpt"), best, ws.hashes.loop);
}

struct SystemSpec {
  const char* label;
  const char* file;
  Stage producer;
  std::string hash;
};

inline std::vector<SystemSpec> systems(const Workspace& ws) {
  return {{"standard", "init.ckpt", Stage::kFinetune, ws.hashes.finetune},
          {"fine-tuned", "finetune.ckpt", Stage::kFinetune, ws.hashes.finetune},
          {"BRIO", "brio.ckpt", Stage::kBrio, ws.hashes.brio},
          {"BRIO-Loop", "loop.ckpt", Stage::kLoop, ws.hashes.loop}};
}

inline void run_evaluate(const Workspace& ws) {
  const Stage st = Stage::kEvaluate;
  if (up_to_date(ws, st, ws.path("eval.json"), ws.hashes.loop)) return ws.log("[evaluate] up to date");
  const LoadedData d = load_data(ws, st);
  nlohmann::json out{{"config_hash", ws.hashes.loop}, {"systems", nlohmann::json::array()}};
  for (const auto& sys : systems(ws)) {
    const auto params = load_params(ws, st, sys.producer, sys.file, sys.hash, d.model);
    const EvalResult r = evaluate(params, d.data.test, d.vocab, ws.cfg.brio.decode, ws.cfg.threads);
    nlohmann::json docs = nlohmann::json::array();
    for (const auto& doc : r.documents)
      docs.push_back({{"doc_id", doc.doc_id}, {"summary", doc.summary}, {"r1", doc.rouge.rouge1.f1},
                      {"r2", doc.rouge.rouge2.f1}, {"rl", doc.rouge.rougeL.f1}});
    out["systems"].push_back({{"system", sys.label}, {"checkpoint", sys.file},
                              {"means", means_json(r.means)}, {"documents", std::move(docs)}});
  }
  write_text(ws.path("eval.json"), out.dump(1) + "\n");
}

inline std::vector<ReportRow> report_rows(const nlohmann::json& eval) {
  std::vector<ReportRow> rows;
  for (const auto& s : eval.at("systems")) {
    const auto m = means_from_json(s.at("means"));
    rows.push_back({s.at("system").get<std::string>(), m.r1, m.r2, m.rl});
  }
  return rows;
}

inline void run_report(const Workspace& ws) {
  const Stage st = Stage::kReport;
  need(ws, st, Stage::kEvaluate, ws.path("eval.json"), ws.hashes.loop);
  const auto rows = report_rows(read_json(ws.path("eval.json")));
  write_text(ws.path("report.txt"), emit_report_text(rows));
  write_text(ws.path("report.csv"), emit_report_csv(rows));
  ws.log(emit_report_text(rows));
}

}  // namespace detail

/// Runs `stages` in the canonical order. Failures surface as PipelineError
/// naming the stage.
inline void run_pipeline(const ExperimentConfig& cfg, const std::vector<Stage>& stages,
                         const PipelineOptions& opts = {}) {
  detail::Workspace ws{cfg, {}, opts, cfg.output_dir};
  const Stage first = stages.empty() ? Stage::kSplit : stages.front();
  try {
    cfg.validate();
    ws.hashes = stage_hashes(cfg);
    std::filesystem::create_directories(ws.dir);
  } catch (const std::exception& e) {
    throw PipelineError(first, e.what());
  }
  for (Stage s : kAllStages) {
    if (std::find(stages.begin(), stages.end(), s) == stages.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      switch (s) {
        case Stage::kSplit: detail::run_split(ws); break;
        case Stage::kFinetune: detail::run_finetune(ws); break;
        case Stage::kGenCands: detail::run_gen_cands(ws); break;
        case Stage::kBrio: detail::run_brio(ws); break;
        case Stage::kLoop: detail::run_loop(ws); break;
        case Stage::kEvaluate: detail::run_evaluate(ws); break;
        case Stage::kReport: detail::run_report(ws); break;
      }
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError(s, e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ws.log(std::string("[") + stage_name(s) + "] done in " + std::to_string(secs) + " s");
  }
}

}  // namespace brio
