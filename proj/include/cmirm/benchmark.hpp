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

#ifndef CMIRM_BENCHMARK_HPP_
#define CMIRM_BENCHMARK_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmirm/embeddings.hpp"
#include "cmirm/io.hpp"
#include "cmirm/metrics.hpp"
#include "cmirm/model.hpp"
#include "cmirm/training.hpp"

namespace cmirm {

struct BenchmarkOptions {
  DurationMode mode = DurationMode::kFirst120;
  std::uint64_t synth_seed = 0;  // text/lyrics fallback encoder seed
};

struct BenchmarkOutput {
  std::vector<TaskResult> results;
  std::vector<SummaryCell> summary;
  std::size_t records = 0;  // test records read, including skipped ones
  std::vector<std::string> skipped;  // records dropped for missing embeddings
};

// Scores every test-split record of the manifest. Rating tasks report
// lcc/srcc/ktau per head present in the data; preference and arena tasks
// report acc per head over non-tie pairs. Cells that cannot be computed
// carry no value and a note. Throws on structural problems: no test records
// (ContractError), unreadable manifest files or a bad checkpoint.
BenchmarkOutput run_benchmark(const DatasetManifest& manifest, const ModelParams& params,
                              const ModelConfig& config, const BenchmarkOptions& options = {});

// Result lines followed by summary lines, one JSON object per line, in a
// fixed order so that identical inputs give identical bytes.
std::vector<nlohmann::json> benchmark_rows(const BenchmarkOutput& output);

// One training configuration of the ablation grid: an initial checkpoint
// (none means random init) and the manifest tasks used for fine-tuning
// (empty means no fine-tuning).
struct TrainingPlan {
  std::string name;
  std::optional<std::filesystem::path> init_checkpoint;
  std::vector<std::string> tasks;
};

// Distill only, +CMI, +MusicEval, +Both and Scratch+Both.
std::vector<TrainingPlan> ablation_plans(const std::filesystem::path& distill_checkpoint,
                                         const std::string& preference_task = "cmi_pref",
                                         const std::string& rating_task = "musiceval");

// Records of the given split whose task is listed (all tasks when empty).
std::vector<TrainingRecord> load_split(const DatasetManifest& manifest, Split split,
                                       const std::vector<std::string>& tasks = {});

// Loads the initial parameters, then runs Stage 2 on the plan's train and
// val records. With no tasks the initial parameters are returned unchanged.
StageResult run_training_plan(const TrainingPlan& plan, const DatasetManifest& manifest,
                              const ModelConfig& model_config, const TrainConfig& train_config,
                              std::uint64_t synth_seed = 0);

// Line-delimited report: one row per step, one per evaluation and a final
// summary row.
std::vector<nlohmann::json> report_rows(const StageReport& report);

}  // namespace cmirm

#endif  // CMIRM_BENCHMARK_HPP_
