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

#ifndef CMIRM_IO_HPP_
#define CMIRM_IO_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmirm/model.hpp"
#include "cmirm/pipeline.hpp"
#include "cmirm/ranking.hpp"
#include "cmirm/training.hpp"

namespace cmirm {

// JSON forms of the line-delimited record files. Optional fields are omitted
// when absent and rejected when null. Parsing errors raise FormatError.
nlohmann::json to_json(const PromptBundle& p);
PromptBundle prompt_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PreferenceRecord& r);
nlohmann::json to_json(const RatingRecord& r);
nlohmann::json to_json(const TrainingRecord& r);
// Records with "y" are ratings; records with "audio_a" are preferences.
TrainingRecord record_from_json(const nlohmann::json& j);

nlohmann::json to_json(const JudgeVerdict& v);
JudgeVerdict verdict_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScoredGeneration& g);
ScoredGeneration scored_generation_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RerankPool& p);
RerankPool rerank_pool_from_json(const nlohmann::json& j);

// One JSON value per non-blank line. FormatError names the file and line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::string to_jsonl(const std::vector<nlohmann::json>& rows);

std::vector<TrainingRecord> read_records(const std::filesystem::path& path);

// "key = value" lines; '#' starts a comment. FormatError on malformed lines
// or repeated keys.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::filesystem::path& path);

// Applies known keys and throws ContractError on any unknown key. Keys:
// dim, prompt_layers, joint_layers, heads, mlp_hidden, ffn_hidden,
// model_seed, stage1_steps, stage2_max_steps, batch_size, label_smoothing,
// reg_a_init, reg_b_init, eval_interval, patience, seed, learning_rate,
// beta1, beta2, adam_epsilon.
void apply_config(const KeyValues& kv, ModelConfig& model, TrainConfig& train);

enum class TaskKind { kPreference, kRating, kArena };
std::string_view to_string(TaskKind k);
TaskKind parse_task_kind(std::string_view s);

enum class Split { kTrain, kVal, kTest };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct ManifestFile {
  std::string task;  // e.g. "cmi_pref", "musiceval", "pam", "music_arena"
  TaskKind kind = TaskKind::kPreference;
  Split split = Split::kTest;
  std::filesystem::path path;  // resolved against the manifest directory
};

// {"name": ..., "embeddings": <store path>, "files": [{"task", "kind",
// "split", "path"}]}. Each record file carries exactly one split tag, so the
// tags partition the records.
struct DatasetManifest {
  std::string name;
  std::filesystem::path embeddings;
  std::vector<ManifestFile> files;

  std::vector<const ManifestFile*> select(Split split) const;
};

// FormatError on malformed JSON; DataError when a referenced file is missing
// or a (task, path) entry is listed twice.
DatasetManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace cmirm

#endif  // CMIRM_IO_HPP_
