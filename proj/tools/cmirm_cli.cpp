// Copyright 2026 The cmirm Authors.
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

// Command-line front end: encode, train, eval, filter, rank and rerank.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cmirm/benchmark.hpp"
#include "cmirm/embeddings.hpp"
#include "cmirm/error.hpp"
#include "cmirm/io.hpp"
#include "cmirm/pipeline.hpp"
#include "cmirm/ranking.hpp"
#include "cmirm/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cmirm {
namespace {

struct EncodeArgs {
  fs::path content;
  fs::path out;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
};

// Content lines: {"kind": "text"|"lyrics"|"audio", "content": ..., "seconds"?}.
int run_encode(const EncodeArgs& a) {
  EmbeddingStore store(a.dim);
  for (const auto& j : read_jsonl(a.content)) {
    const ContentKind kind = parse_content_kind(j.at("kind").get<std::string>());
    const std::string content = j.at("content").get<std::string>();
    const double seconds = j.contains("seconds") ? j.at("seconds").get<double>() : 10.0;
    store.add(synth_encode(content, kind, a.dim, a.seed, seconds));
  }
  write_store(a.out, store);
  spdlog::info("wrote {} sequences to {}", store.size(), a.out.string());
  return 0;
}

struct TrainArgs {
  int stage = 1;
  fs::path manifest;
  std::optional<fs::path> config;
  fs::path checkpoint_out;
  std::optional<fs::path> init;
  std::vector<std::string> tasks;
  std::optional<fs::path> report;
  std::optional<std::uint64_t> seed;
  std::uint64_t synth_seed = 0;
};

int run_train(const TrainArgs& a) {
  ModelConfig model;
  TrainConfig train;
  if (a.config) apply_config(read_key_values(*a.config), model, train);
  if (a.seed) train.seed = *a.seed;
  const DatasetManifest manifest = read_manifest(a.manifest);

  StageResult result;
  if (a.stage == 1) {
    std::vector<PreferenceRecord> pairs;
    for (auto& r : load_split(manifest, Split::kTrain, a.tasks)) {
      auto* p = std::get_if<PreferenceRecord>(&r);
      if (p != nullptr && p->source == Source::kPseudo) pairs.push_back(std::move(*p));
    }
    const EmbeddingStore store = load_store(manifest.embeddings);
    const EmbeddingSource source(store, a.synth_seed);
    const ModelParams init = a.init ? read_checkpoint(*a.init, model).params : init_params(model);
    std::vector<TrainingRecord> monitor = load_split(manifest, Split::kVal, a.tasks);
    result = train_stage1(pairs, init, model, train, source, monitor);
  } else {
    TrainingPlan plan{"cli", a.init, a.tasks};
    if (plan.tasks.empty()) {
      for (const auto& f : manifest.files) {
        if (std::find(plan.tasks.begin(), plan.tasks.end(), f.task) == plan.tasks.end())
          plan.tasks.push_back(f.task);
      }
    }
    result = run_training_plan(plan, manifest, model, train, a.synth_seed);
  }
  write_checkpoint(a.checkpoint_out, model, result.params);
  if (a.report) write_jsonl(*a.report, report_rows(result.report));
  spdlog::info("stage {} finished after {} steps; selected step {}", a.stage,
               result.report.steps.size(), result.report.selected_step);
  return 0;
}

struct EvalArgs {
  fs::path manifest;
  fs::path checkpoint;
  std::string mode = "first120";
  fs::path out;
  std::uint64_t synth_seed = 0;
};

int run_eval(const EvalArgs& a) {
  const DatasetManifest manifest = read_manifest(a.manifest);
  const Checkpoint ckpt = read_checkpoint(a.checkpoint);
  BenchmarkOptions options;
  options.mode = parse_duration_mode(a.mode);
  options.synth_seed = a.synth_seed;
  const BenchmarkOutput out = run_benchmark(manifest, ckpt.params, ckpt.config, options);
  write_jsonl(a.out, benchmark_rows(out));
  return 0;
}

struct FilterArgs {
  fs::path verdicts;
  std::optional<fs::path> pairs;
  fs::path kept;
  std::optional<fs::path> discarded;
  std::optional<fs::path> report;
};

// With --pairs, kept labels become pseudo preference records for training;
// the pairs file holds preference-shaped records whose label is ignored.
int run_filter(const FilterArgs& a) {
  std::vector<JudgeVerdict> verdicts;
  for (const auto& j : read_jsonl(a.verdicts)) verdicts.push_back(verdict_from_json(j));
  const FilterResult result = consistency_filter(verdicts);

  std::vector<json> kept;
  if (a.pairs) {
    std::map<std::string, PreferenceRecord> pairs;
    for (auto& r : read_records(*a.pairs)) {
      auto* p = std::get_if<PreferenceRecord>(&r);
      if (p == nullptr) throw FormatError("pairs file must hold preference records");
      pairs.emplace(p->pair_id, std::move(*p));
    }
    for (const auto& k : result.kept) {
      auto it = pairs.find(k.pair_id);
      if (it == pairs.end()) throw DataError("verdict for unknown pair " + k.pair_id);
      PreferenceRecord r = it->second;
      r.label = k.label;
      r.dimension = k.dimension;
      r.source = Source::kPseudo;
      r.confidence.reset();
      kept.push_back(to_json(r));
    }
  } else {
    for (const auto& k : result.kept) {
      kept.push_back({{"pair_id", k.pair_id},
                      {"dimension", std::string(short_name(k.dimension))},
                      {"label", std::string(to_string(k.label))}});
    }
  }
  write_jsonl(a.kept, kept);

  if (a.discarded) {
    std::vector<json> rows;
    for (const auto& d : result.discarded) {
      rows.push_back({{"pair_id", d.pair_id},
                      {"dimension", std::string(short_name(d.dimension))},
                      {"reason", d.reason}});
    }
    write_jsonl(*a.discarded, rows);
  }
  if (a.report) {
    std::vector<json> rows;
    for (Dimension d : kDimensions) {
      try {
        for (const auto& row : bias_report(verdicts, d)) {
          rows.push_back({{"dimension", std::string(short_name(d))},
                          {"row", row.name},
                          {"win_a", row.win_a},
                          {"win_b", row.win_b},
                          {"tie", row.tie},
                          {"n", row.n}});
        }
      } catch (const ContractError& e) {
        spdlog::warn("{}", e.what());
      }
    }
    write_jsonl(*a.report, rows);
  }
  spdlog::info("kept {} labels, discarded {}", result.kept.size(), result.discarded.size());
  return 0;
}

struct RankArgs {
  fs::path generations;
  fs::path out;
  std::string dimension = "both";
};

int run_rank(const RankArgs& a) {
  std::vector<ScoredGeneration> gens;
  for (const auto& j : read_jsonl(a.generations)) gens.push_back(scored_generation_from_json(j));
  std::vector<Dimension> dims;
  if (a.dimension == "both") {
    dims.assign(std::begin(kDimensions), std::end(kDimensions));
  } else {
    dims.push_back(parse_dimension(a.dimension));
  }
  std::vector<Battle> battles;
  for (Dimension d : dims) {
    auto set = round_robin_battles(gens, d);
    battles.insert(battles.end(), set.battles.begin(), set.battles.end());
  }
  std::vector<json> rows;
  for (const auto& table : fit_leaderboard(battles)) {
    for (const auto& e : table.entries) {
      json j{{"cell", table.cell},
             {"dimension", std::string(short_name(table.dimension))},
             {"model", e.model},
             {"raw", e.raw},
             {"scaled", e.scaled},
             {"n_battles", e.n_battles}};
      if (table.components > 1) j["component"] = e.component;
      if (e.boundary_unstable) j["boundary_unstable"] = true;
      rows.push_back(std::move(j));
    }
  }
  write_jsonl(a.out, rows);
  return 0;
}

struct RerankArgs {
  fs::path pools;
  std::optional<std::size_t> n;
  fs::path out;
};

int run_rerank(const RerankArgs& a) {
  std::vector<json> rows;
  for (const auto& j : read_jsonl(a.pools)) {
    RerankPool pool = rerank_pool_from_json(j);
    if (a.n) pool.n = *a.n;
    const RerankChoice c = best_of_n(pool);
    rows.push_back({{"prompt_id", pool.prompt_id},
                    {"n", pool.n},
                    {"index", c.index},
                    {"audio_id", c.audio_id},
                    {"score", c.score}});
  }
  write_jsonl(a.out, rows);
  return 0;
}

}  // namespace
}  // namespace cmirm

int main(int argc, char** argv) {
  using namespace cmirm;
  CLI::App app{"Compositional-instruction music reward model tools"};
  app.require_subcommand(1);

  EncodeArgs enc;
  auto* encode = app.add_subcommand("encode", "Build an embedding store with the synthetic encoder");
  encode->add_option("--content", enc.content, "Content records (JSONL)")->required()->check(CLI::ExistingFile);
  encode->add_option("--out", enc.out, "Output store")->required();
  encode->add_option("--dim", enc.dim, "Embedding dimension");
  encode->add_option("--seed", enc.seed, "Encoder seed");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Run training stage 1 or 2");
  train->add_option("--stage", tr.stage, "1 or 2")->check(CLI::Range(1, 2));
  train->add_option("--manifest", tr.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--config", tr.config, "Key-value config file")->check(CLI::ExistingFile);
  train->add_option("--checkpoint-out", tr.checkpoint_out, "Output checkpoint")->required();
  train->add_option("--init", tr.init, "Initial checkpoint")->check(CLI::ExistingFile);
  train->add_option("--tasks", tr.tasks, "Manifest tasks to train on")->delimiter(',');
  train->add_option("--report", tr.report, "Stage report (JSONL)");
  train->add_option("--seed", tr.seed, "Shuffling seed");
  train->add_option("--synth-seed", tr.synth_seed, "Text encoder seed");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score the test split and write metric records");
  eval->add_option("--manifest", ev.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--mode", ev.mode, "first10, mean10 or first120")
      ->check(CLI::IsMember({"first10", "mean10", "first120"}));
  eval->add_option("--out", ev.out, "Result records")->required();
  eval->add_option("--synth-seed", ev.synth_seed, "Text encoder seed");

  FilterArgs fi;
  auto* filter = app.add_subcommand("filter", "Position-consistency filter over judge verdicts");
  filter->add_option("--verdicts", fi.verdicts, "Judge verdicts (JSONL)")->required()->check(CLI::ExistingFile);
  filter->add_option("--pairs", fi.pairs, "Pair records to label")->check(CLI::ExistingFile);
  filter->add_option("--kept", fi.kept, "Kept labels out")->required();
  filter->add_option("--discarded", fi.discarded, "Discarded labels out");
  filter->add_option("--report", fi.report, "Label distribution out");

  RankArgs ra;
  auto* rank = app.add_subcommand("rank", "Round-robin battles and Bradley-Terry leaderboard");
  rank->add_option("--generations", ra.generations, "Scored generations (JSONL)")->required()->check(CLI::ExistingFile);
  rank->add_option("--out", ra.out, "Leaderboard records")->required();
  rank->add_option("--dimension", ra.dimension, "mus, ali or both");

  RerankArgs rr;
  auto* rerank = app.add_subcommand("rerank", "Best-of-N selection");
  rerank->add_option("--pools", rr.pools, "Candidate pools (JSONL)")->required()->check(CLI::ExistingFile);
  rerank->add_option("--n", rr.n, "Selection budget (overrides the pool's n)");
  rerank->add_option("--out", rr.out, "Selections")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*encode) return run_encode(enc);
    if (*train) return run_train(tr);
    if (*eval) return run_eval(ev);
    if (*filter) return run_filter(fi);
    if (*rank) return run_rank(ra);
    if (*rerank) return run_rerank(rr);
  } catch (const cmirm::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("malformed record: {}", e.what());
    return 1;
  }
  return 0;
}
