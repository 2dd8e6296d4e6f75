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

#include "cmirm/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "cmirm/error.hpp"

namespace cmirm {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw FormatError("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
  if (it->is_null()) throw FormatError(std::string("field '") + key + "' is null");
  return *it;
}

const json* optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return nullptr;
  if (it->is_null()) throw FormatError(std::string("field '") + key + "' is null");
  return &*it;
}

std::string get_string(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double get_number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw FormatError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::optional<int> get_optional_int(const json& j, const char* key) {
  const json* v = optional_field(j, key);
  if (v == nullptr) return std::nullopt;
  if (!v->is_number_integer()) throw FormatError(std::string("field '") + key + "' must be an integer");
  return v->get<int>();
}

template <class F>
auto wrap_enum(F&& parse, const std::string& value) {
  try {
    return parse(value);
  } catch (const DataError& e) {
    throw FormatError(e.what());
  }
}

}  // namespace

json to_json(const PromptBundle& p) {
  json j = json::object();
  if (p.text) j["text"] = *p.text;
  if (p.lyrics) j["lyrics"] = *p.lyrics;
  if (p.ref_audio) j["ref_audio_id"] = *p.ref_audio;
  return j;
}

PromptBundle prompt_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("prompt must be an object");
  PromptBundle p;
  if (optional_field(j, "text")) p.text = get_string(j, "text");
  if (optional_field(j, "lyrics")) p.lyrics = get_string(j, "lyrics");
  if (optional_field(j, "ref_audio_id")) p.ref_audio = get_string(j, "ref_audio_id");
  return p;
}

json to_json(const PreferenceRecord& r) {
  json j;
  j["pair_id"] = r.pair_id;
  j["prompt"] = to_json(r.prompt);
  j["audio_a"] = r.audio_a;
  j["audio_b"] = r.audio_b;
  j["label"] = std::string(to_string(r.label));
  j["dimension"] = std::string(short_name(r.dimension));
  if (r.confidence) j["confidence"] = *r.confidence;
  j["source"] = std::string(to_string(r.source));
  return j;
}

json to_json(const RatingRecord& r) {
  json j;
  j["prompt"] = to_json(r.prompt);
  j["audio"] = r.audio;
  j["y"] = r.y;
  j["dimension"] = std::string(short_name(r.dimension));
  return j;
}

json to_json(const TrainingRecord& r) {
  return std::visit([](const auto& rec) { return to_json(rec); }, r);
}

TrainingRecord record_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("record must be a JSON object");
  const Dimension dim = wrap_enum(parse_dimension, get_string(j, "dimension"));
  if (j.contains("y")) {
    RatingRecord r;
    r.prompt = prompt_from_json(field(j, "prompt"));
    r.audio = get_string(j, "audio");
    r.y = get_number(j, "y");
    r.dimension = dim;
    return r;
  }
  PreferenceRecord r;
  r.pair_id = get_string(j, "pair_id");
  r.prompt = prompt_from_json(field(j, "prompt"));
  r.audio_a = get_string(j, "audio_a");
  r.audio_b = get_string(j, "audio_b");
  r.label = wrap_enum(parse_label, get_string(j, "label"));
  r.dimension = dim;
  r.confidence = get_optional_int(j, "confidence");
  r.source = wrap_enum(parse_source, get_string(j, "source"));
  return r;
}

namespace {

json judgment_json(const DimensionJudgment& d) {
  json j;
  j["choice"] = std::string(to_string(d.choice));
  if (d.score_first) j["score_first"] = *d.score_first;
  if (d.score_second) j["score_second"] = *d.score_second;
  return j;
}

}  // namespace

json to_json(const JudgeVerdict& v) {
  json j;
  j["pair_id"] = v.pair_id;
  j["direction"] = std::string(to_string(v.direction));
  for (Dimension d : kDimensions) {
    if (v.on(d)) j[std::string(short_name(d))] = judgment_json(*v.on(d));
  }
  return j;
}

JudgeVerdict verdict_from_json(const json& j) {
  JudgeVerdict v;
  v.pair_id = get_string(j, "pair_id");
  v.direction = wrap_enum(parse_direction, get_string(j, "direction"));
  for (Dimension d : kDimensions) {
    const std::string key(short_name(d));
    const json* dj = optional_field(j, key.c_str());
    if (dj == nullptr) continue;
    DimensionJudgment judgment;
    judgment.choice = wrap_enum(parse_judge_choice, get_string(*dj, "choice"));
    judgment.score_first = get_optional_int(*dj, "score_first");
    judgment.score_second = get_optional_int(*dj, "score_second");
    for (const auto& s : {judgment.score_first, judgment.score_second}) {
      if (s && (*s < 1 || *s > 10)) throw FormatError("judge scores must be in 1..10");
    }
    v.on(d) = judgment;
  }
  return v;
}

json to_json(const ScoredGeneration& g) {
  json j;
  j["prompt_id"] = g.prompt_id;
  j["cell"] = g.cell;
  j["model"] = g.model;
  j["mus"] = g.scores.mus;
  j["ali"] = g.scores.ali;
  return j;
}

ScoredGeneration scored_generation_from_json(const json& j) {
  ScoredGeneration g;
  g.prompt_id = get_string(j, "prompt_id");
  g.cell = get_string(j, "cell");
  g.model = get_string(j, "model");
  g.scores.mus = get_number(j, "mus");
  g.scores.ali = get_number(j, "ali");
  return g;
}

json to_json(const RerankPool& p) {
  json j;
  j["prompt_id"] = p.prompt_id;
  j["n"] = p.n;
  json c = json::array();
  for (const auto& cand : p.candidates) {
    c.push_back({{"audio_id", cand.audio_id}, {"mus", cand.scores.mus}, {"ali", cand.scores.ali}});
  }
  j["candidates"] = c;
  return j;
}

RerankPool rerank_pool_from_json(const json& j) {
  RerankPool p;
  p.prompt_id = get_string(j, "prompt_id");
  if (const json* n = optional_field(j, "n")) {
    if (!n->is_number_unsigned()) throw FormatError("field 'n' must be a positive integer");
    p.n = n->get<std::size_t>();
  }
  const json& c = field(j, "candidates");
  if (!c.is_array()) throw FormatError("field 'candidates' must be an array");
  for (const auto& cj : c) {
    p.candidates.push_back(
        {get_string(cj, "audio_id"), RewardScores{get_number(cj, "ali"), get_number(cj, "mus")}});
  }
  return p;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_jsonl(rows);
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<TrainingRecord> read_records(const std::filesystem::path& path) {
  std::vector<TrainingRecord> records;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    try {
      records.push_back(record_from_json(j));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": record " + std::to_string(line) + ": " + e.what());
    }
  }
  return records;
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError("config line " + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw FormatError("config line " + std::to_string(line_no) + ": repeated key " + key);
    }
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') {
    throw FormatError("config key " + key + ": expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(out);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) {
    throw FormatError("config key " + key + ": expected a number, got '" + v + "'");
  }
  return out;
}

}  // namespace

void apply_config(const KeyValues& kv, ModelConfig& model, TrainConfig& train) {
  for (const auto& [key, value] : kv) {
    if (key == "dim") model.dim = to_size(key, value);
    else if (key == "prompt_layers") model.prompt_layers = to_size(key, value);
    else if (key == "joint_layers") model.joint_layers = to_size(key, value);
    else if (key == "heads") model.heads = to_size(key, value);
    else if (key == "mlp_hidden") model.mlp_hidden = to_size(key, value);
    else if (key == "ffn_hidden") model.ffn_hidden = to_size(key, value);
    else if (key == "model_seed") model.seed = to_size(key, value);
    else if (key == "stage1_steps") train.stage1_steps = to_size(key, value);
    else if (key == "stage2_max_steps") train.stage2_max_steps = to_size(key, value);
    else if (key == "batch_size") train.batch_size = to_size(key, value);
    else if (key == "label_smoothing") train.label_smoothing = to_double(key, value);
    else if (key == "reg_a_init") train.reg_a_init = to_double(key, value);
    else if (key == "reg_b_init") train.reg_b_init = to_double(key, value);
    else if (key == "eval_interval") train.eval_interval = to_size(key, value);
    else if (key == "patience") train.patience = to_size(key, value);
    else if (key == "seed") train.seed = to_size(key, value);
    else if (key == "learning_rate") train.adam.learning_rate = to_double(key, value);
    else if (key == "beta1") train.adam.beta1 = to_double(key, value);
    else if (key == "beta2") train.adam.beta2 = to_double(key, value);
    else if (key == "adam_epsilon") train.adam.epsilon = to_double(key, value);
    else throw ContractError("unknown config key '" + key + "'");
  }
  model.validate();
  train.validate();
}

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kPreference:
      return "preference";
    case TaskKind::kRating:
      return "rating";
    case TaskKind::kArena:
      return "arena";
  }
  return "preference";
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "preference") return TaskKind::kPreference;
  if (s == "rating") return TaskKind::kRating;
  if (s == "arena") return TaskKind::kArena;
  throw FormatError("unknown task kind '" + std::string(s) + "'");
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "test";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw FormatError("unknown split '" + std::string(s) + "'");
}

std::vector<const ManifestFile*> DatasetManifest::select(Split split) const {
  std::vector<const ManifestFile*> out;
  for (const auto& f : files)
    if (f.split == split) out.push_back(&f);
  return out;
}

DatasetManifest parse_manifest(const json& j, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  m.name = get_string(j, "name");
  m.embeddings = base_dir / get_string(j, "embeddings");
  if (!std::filesystem::exists(m.embeddings)) {
    throw DataError("embedding store " + m.embeddings.string() + " does not exist");
  }
  const json& files = field(j, "files");
  if (!files.is_array()) throw FormatError("field 'files' must be an array");
  std::set<std::filesystem::path> seen;
  for (const auto& fj : files) {
    ManifestFile f;
    f.task = get_string(fj, "task");
    f.kind = parse_task_kind(get_string(fj, "kind"));
    f.split = parse_split(get_string(fj, "split"));
    f.path = base_dir / get_string(fj, "path");
    if (!std::filesystem::exists(f.path)) {
      throw DataError("record file " + f.path.string() + " does not exist");
    }
    // One split tag per file keeps the splits a partition of the records.
    if (!seen.insert(std::filesystem::weakly_canonical(f.path)).second) {
      throw DataError("record file " + f.path.string() + " is listed twice");
    }
    m.files.push_back(std::move(f));
  }
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

}  // namespace cmirm
