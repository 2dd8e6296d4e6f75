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

#include "cmirm/benchmark.hpp"

#include <algorithm>
#include <map>

#include <spdlog/spdlog.h>

#include "cmirm/error.hpp"
#include "cmirm/pipeline.hpp"

namespace cmirm {

using nlohmann::json;

namespace {

struct TaskData {
  TaskKind kind = TaskKind::kPreference;
  // Per head: rating predictions and targets, or pair scores and labels.
  std::array<std::vector<double>, 2> pred, target, score_a, score_b;
  std::array<std::vector<Label>, 2> labels;
};

double head(const RewardScores& s, Dimension d) {
  return d == Dimension::kMusicality ? s.mus : s.ali;
}

TaskResult make_result(const std::string& task, std::string metric, std::size_t n) {
  TaskResult r;
  r.task = task;
  r.metric = std::move(metric);
  r.n = n;
  return r;
}

template <class F>
void fill_metric(TaskResult& r, F&& compute) {
  try {
    r.value = compute();
  } catch (const DegenerateInputError& e) {
    r.note = e.what();
  } catch (const ContractError& e) {
    r.note = e.what();
  }
}

}  // namespace

BenchmarkOutput run_benchmark(const DatasetManifest& manifest, const ModelParams& params,
                              const ModelConfig& config, const BenchmarkOptions& options) {
  const auto files = manifest.select(Split::kTest);
  if (files.empty()) throw ContractError("manifest " + manifest.name + " has no test files");
  const EmbeddingStore store = load_store(manifest.embeddings);
  if (store.dim() != config.dim) {
    throw ContractError("embedding dim " + std::to_string(store.dim()) +
                        " does not match model dim " + std::to_string(config.dim));
  }
  const EmbeddingSource source(store, options.synth_seed);
  Scorer scorer(params, config);

  BenchmarkOutput out;
  std::vector<std::string> order;
  std::map<std::string, TaskData> tasks;
  for (const ManifestFile* file : files) {
    auto [it, inserted] = tasks.try_emplace(file->task);
    if (inserted) {
      order.push_back(file->task);
      it->second.kind = file->kind;
    } else if (it->second.kind != file->kind) {
      throw ContractError("task " + file->task + " is listed with two kinds");
    }
    TaskData& data = it->second;
    const auto records = read_records(file->path);
    for (std::size_t i = 0; i < records.size(); ++i) {
      ++out.records;
      const std::string where = file->path.filename().string() + ":" + std::to_string(i + 1);
      try {
        if (const auto* p = std::get_if<PreferenceRecord>(&records[i])) {
          if (file->kind == TaskKind::kRating) throw ContractError(where + ": preference record in a rating task");
          if (p->label == Label::kTie) continue;
          const ResolvedPrompt prompt = source.resolve(p->prompt);
          const auto sa = score_with_view(scorer, prompt, source.audio(p->audio_a), options.mode);
          const auto sb = score_with_view(scorer, prompt, source.audio(p->audio_b), options.mode);
          const std::size_t k = head_index(p->dimension);
          data.score_a[k].push_back(head(sa, p->dimension));
          data.score_b[k].push_back(head(sb, p->dimension));
          data.labels[k].push_back(p->label);
        } else {
          const auto& r = std::get<RatingRecord>(records[i]);
          if (file->kind != TaskKind::kRating) throw ContractError(where + ": rating record in a preference task");
          const auto s = score_with_view(scorer, source.resolve(r.prompt), source.audio(r.audio),
                                         options.mode);
          const std::size_t k = head_index(r.dimension);
          data.pred[k].push_back(head(s, r.dimension));
          data.target[k].push_back(r.y);
        }
      } catch (const DataError& e) {
        out.skipped.push_back(where + ": " + e.what());
      }
    }
  }
  if (out.records == 0) throw ContractError("manifest " + manifest.name + " has no test records");
  if (!out.skipped.empty()) {
    spdlog::warn("run_benchmark: skipped {} of {} records with missing embeddings",
                 out.skipped.size(), out.records);
  }

  for (const auto& task : order) {
    const TaskData& data = tasks.at(task);
    for (Dimension d : kDimensions) {
      const std::size_t k = head_index(d);
      const std::string suffix = "_" + std::string(short_name(d));
      if (data.kind == TaskKind::kRating) {
        const auto& x = data.pred[k];
        const auto& y = data.target[k];
        if (x.empty()) continue;
        using Stat = double (*)(std::span<const double>, std::span<const double>);
        const std::pair<const char*, Stat> stats[] = {
            {"lcc", pearson_lcc}, {"srcc", spearman_srcc}, {"ktau", kendall_tau}};
        for (const auto& [name, fn] : stats) {
          TaskResult r = make_result(task, name + suffix, x.size());
          fill_metric(r, [&] { return fn(x, y); });
          out.results.push_back(std::move(r));
        }
      } else {
        if (data.labels[k].empty()) continue;
        TaskResult r = make_result(task, "acc" + suffix, data.labels[k].size());
        fill_metric(r, [&] { return pairwise_accuracy(data.score_a[k], data.score_b[k], data.labels[k]); });
        out.results.push_back(std::move(r));
      }
    }
  }
  const auto rules = default_summary_rules();
  out.summary = aggregate_benchmark(out.results, rules);
  return out;
}

std::vector<json> benchmark_rows(const BenchmarkOutput& output) {
  std::vector<json> rows;
  for (const auto& r : output.results) {
    json j;
    j["task"] = r.task;
    j["metric"] = r.metric;
    if (r.value) j["value"] = *r.value;
    j["n"] = r.n;
    if (!r.note.empty()) j["note"] = r.note;
    rows.push_back(std::move(j));
  }
  for (const auto& c : output.summary) {
    json j;
    j["summary"] = c.name;
    if (c.value) j["value"] = *c.value;
    if (!c.missing.empty()) j["missing"] = c.missing;
    rows.push_back(std::move(j));
  }
  return rows;
}

std::vector<TrainingPlan> ablation_plans(const std::filesystem::path& distill_checkpoint,
                                         const std::string& preference_task,
                                         const std::string& rating_task) {
  return {
      {"distill_only", distill_checkpoint, {}},
      {"distill+pref", distill_checkpoint, {preference_task}},
      {"distill+rating", distill_checkpoint, {rating_task}},
      {"distill+both", distill_checkpoint, {preference_task, rating_task}},
      {"scratch+both", std::nullopt, {preference_task, rating_task}},
  };
}

std::vector<TrainingRecord> load_split(const DatasetManifest& manifest, Split split,
                                       const std::vector<std::string>& tasks) {
  std::vector<TrainingRecord> out;
  for (const ManifestFile* f : manifest.select(split)) {
    if (!tasks.empty() && std::find(tasks.begin(), tasks.end(), f->task) == tasks.end()) continue;
    auto records = read_records(f->path);
    for (auto& r : records) {
      if (auto* p = std::get_if<PreferenceRecord>(&r); p && p->label == Label::kTie) continue;
      out.push_back(std::move(r));
    }
  }
  return out;
}

StageResult run_training_plan(const TrainingPlan& plan, const DatasetManifest& manifest,
                              const ModelConfig& model_config, const TrainConfig& train_config,
                              std::uint64_t synth_seed) {
  ModelParams init = plan.init_checkpoint
                         ? read_checkpoint(*plan.init_checkpoint, model_config).params
                         : init_params(model_config);
  if (plan.tasks.empty()) {
    StageResult result{std::move(init), {}};
    result.report.stage = "stage2";
    result.report.regression = {train_config.reg_a_init, train_config.reg_b_init};
    return result;
  }
  for (const auto& task : plan.tasks) {
    const bool listed = std::any_of(manifest.files.begin(), manifest.files.end(),
                                    [&](const ManifestFile& f) { return f.task == task; });
    if (!listed) throw DataError("plan " + plan.name + ": task " + task + " not in manifest");
  }
  const auto train = load_split(manifest, Split::kTrain, plan.tasks);
  const auto val = load_split(manifest, Split::kVal, plan.tasks);
  const EmbeddingStore store = load_store(manifest.embeddings);
  const EmbeddingSource source(store, synth_seed);
  return train_stage2(train, val, init, model_config, train_config, source);
}

std::vector<json> report_rows(const StageReport& report) {
  std::vector<json> rows;
  for (const auto& s : report.steps) {
    json j;
    j["stage"] = report.stage;
    j["step"] = s.step;
    j["loss_total"] = s.loss.total;
    if (s.loss.mus_present()) j["loss_mus"] = s.loss.mus;
    if (s.loss.ali_present()) j["loss_ali"] = s.loss.ali;
    rows.push_back(std::move(j));
  }
  for (const auto& e : report.evals) {
    json j;
    j["stage"] = report.stage;
    j["eval_step"] = e.step;
    j["criterion"] = e.criterion;
    if (e.mus_accuracy) j["acc_mus"] = *e.mus_accuracy;
    if (e.ali_accuracy) j["acc_ali"] = *e.ali_accuracy;
    if (e.mus_ce) j["ce_mus"] = *e.mus_ce;
    if (e.ali_ce) j["ce_ali"] = *e.ali_ce;
    rows.push_back(std::move(j));
  }
  json summary;
  summary["stage"] = report.stage;
  summary["selected_step"] = report.selected_step;
  summary["epochs"] = report.epochs;
  summary["reg_a"] = report.regression.a;
  summary["reg_b"] = report.regression.b;
  rows.push_back(std::move(summary));
  return rows;
}

}  // namespace cmirm
