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

#ifndef CMIRM_TESTS_SUPPORT_HPP_
#define CMIRM_TESTS_SUPPORT_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmirm/embeddings.hpp"
#include "cmirm/io.hpp"
#include "cmirm/metrics.hpp"
#include "cmirm/model.hpp"
#include "cmirm/pipeline.hpp"
#include "cmirm/training.hpp"

namespace cmirm::testing {

// Clips whose frames are noise plus a planted quality latent along a fixed
// direction, so "better" is linearly readable from the audio.
struct PlantedWorld {
  EmbeddingStore store;
  std::vector<std::string> train_clips;
  std::vector<std::string> test_clips;
  std::map<std::string, double> latent;
  std::vector<std::string> prompts;
};

inline PlantedWorld make_planted_world(std::size_t n_train, std::size_t n_test, std::size_t dim,
                                       std::uint64_t seed, std::size_t frames = 4,
                                       double noise = 0.3) {
  PlantedWorld w{EmbeddingStore(dim), {}, {}, {}, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> direction(dim);
  for (auto& v : direction) v = unit(rng) < 0.0 ? -1.0 : 1.0;
  auto make_clip = [&](const std::string& id) {
    const double q = unit(rng);
    Tensor t({frames, dim});
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t d = 0; d < dim; ++d) t.at(f, d) = noise * normal(rng) + q * direction[d];
    w.store.add(EmbeddingSequence{id, std::move(t), 1.0});
    w.latent[id] = q;
  };
  for (std::size_t i = 0; i < n_train; ++i) {
    w.train_clips.push_back("train_" + std::to_string(i));
    make_clip(w.train_clips.back());
  }
  for (std::size_t i = 0; i < n_test; ++i) {
    w.test_clips.push_back("test_" + std::to_string(i));
    make_clip(w.test_clips.back());
  }
  for (int i = 0; i < 8; ++i) w.prompts.push_back("a short piece in style " + std::to_string(i));
  return w;
}

// Pairs over `clips` labelled by the latent; label A iff the first clip is
// better.
inline std::vector<PreferenceRecord> planted_pairs_from(const PlantedWorld& w,
                                                        const std::vector<std::string>& clips,
                                                        std::size_t n, std::uint64_t seed,
                                                        Dimension dim, Source source,
                                                        const std::string& id_prefix = "p") {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, clips.size() - 1);
  std::uniform_int_distribution<std::size_t> prompt(0, w.prompts.size() - 1);
  std::vector<PreferenceRecord> out;
  while (out.size() < n) {
    const std::string& a = clips[pick(rng)];
    const std::string& b = clips[pick(rng)];
    if (a == b) continue;
    PreferenceRecord r;
    r.pair_id = id_prefix + std::to_string(out.size());
    r.prompt.text = w.prompts[prompt(rng)];
    r.audio_a = a;
    r.audio_b = b;
    r.label = w.latent.at(a) > w.latent.at(b) ? Label::kA : Label::kB;
    r.dimension = dim;
    r.source = source;
    out.push_back(std::move(r));
  }
  return out;
}

// Pseudo pairs over the training clips.
inline std::vector<PreferenceRecord> planted_pairs(const PlantedWorld& w, std::size_t n,
                                                   std::uint64_t seed,
                                                   Dimension dim = Dimension::kMusicality) {
  return planted_pairs_from(w, w.train_clips, n, seed, dim, Source::kPseudo);
}

// Ratings y = 3 + 2 q, alternating heads when `both` is set.
inline std::vector<TrainingRecord> planted_ratings(const PlantedWorld& w,
                                                   const std::vector<std::string>& clips,
                                                   bool both) {
  std::vector<TrainingRecord> out;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const Dimension d =
        both && i % 2 == 1 ? Dimension::kAlignment : Dimension::kMusicality;
    PromptBundle prompt;
    prompt.text = w.prompts[i % w.prompts.size()];
    out.push_back(RatingRecord{prompt, clips[i], 3.0 + 2.0 * w.latent.at(clips[i]), d});
  }
  return out;
}

inline void write_records(const std::filesystem::path& path,
                          const std::vector<TrainingRecord>& records) {
  std::vector<nlohmann::json> rows;
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

// Writes a planted benchmark under `dir`: the embedding store, preference
// (cmi_pref), rating (musiceval, pam) and arena (music_arena) files, and
// manifest.json. Training clips feed train/val, held-out clips feed test.
inline std::filesystem::path write_planted_dataset(const std::filesystem::path& dir,
                                                   const PlantedWorld& w, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_store(dir / "embeddings.bin", w.store);
  const std::size_t cut = w.train_clips.size() * 4 / 5;
  const std::vector<std::string> train(w.train_clips.begin(), w.train_clips.begin() + cut);
  const std::vector<std::string> val(w.train_clips.begin() + cut, w.train_clips.end());
  nlohmann::json files = nlohmann::json::array();
  auto add = [&](const std::string& task, const std::string& kind, const std::string& split,
                 const std::vector<TrainingRecord>& records) {
    const std::string name = task + "_" + split + ".jsonl";
    write_records(dir / name, records);
    files.push_back({{"task", task}, {"kind", kind}, {"split", split}, {"path", name}});
  };
  auto pairs = [&](const std::vector<std::string>& clips, std::size_t n, std::uint64_t s,
                   const std::string& prefix, bool both) {
    std::vector<TrainingRecord> out;
    for (const auto& r : planted_pairs_from(w, clips, n, s, Dimension::kMusicality,
                                            Source::kHuman, prefix + "m"))
      out.push_back(r);
    if (both)
      for (const auto& r : planted_pairs_from(w, clips, n, s + 1, Dimension::kAlignment,
                                              Source::kHuman, prefix + "a"))
        out.push_back(r);
    return out;
  };
  add("cmi_pref", "preference", "train", pairs(train, 120, seed, "tr", true));
  add("cmi_pref", "preference", "val", pairs(val, 40, seed + 10, "va", true));
  add("cmi_pref", "preference", "test", pairs(w.test_clips, 60, seed + 20, "te", true));
  add("musiceval", "rating", "train", planted_ratings(w, train, false));
  add("musiceval", "rating", "val", planted_ratings(w, val, false));
  add("musiceval", "rating", "test", planted_ratings(w, w.test_clips, false));
  add("pam", "rating", "test", planted_ratings(w, w.test_clips, true));
  add("music_arena", "arena", "test", pairs(w.test_clips, 60, seed + 30, "ar", false));
  const nlohmann::json manifest = {
      {"name", "planted"}, {"embeddings", "embeddings.bin"}, {"files", files}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  return dir / "manifest.json";
}

inline ModelConfig small_model(std::uint64_t seed = 1, std::size_t dim = 16) {
  ModelConfig c;
  c.dim = dim;
  c.prompt_layers = 1;
  c.joint_layers = 1;
  c.heads = 2;
  c.mlp_hidden = 16;
  c.seed = seed;
  return c;
}

inline std::vector<TrainingRecord> as_records(std::span<const PreferenceRecord> pairs) {
  return {pairs.begin(), pairs.end()};
}

// SRCC between a head's scores on the held-out clips and the planted latent,
// with every clip scored under the first prompt.
inline double heldout_srcc(const PlantedWorld& w, const ModelParams& params,
                           const ModelConfig& config, Dimension dim = Dimension::kMusicality) {
  const EmbeddingSource source(w.store);
  PromptBundle prompt;
  prompt.text = w.prompts.front();
  Scorer scorer(params, config);
  const ResolvedPrompt resolved = source.resolve(prompt);
  std::vector<double> scores, latent;
  for (const auto& id : w.test_clips) {
    scores.push_back(scorer.score(resolved, w.store.at(id).frames).on(dim));
    latent.push_back(w.latent.at(id));
  }
  return spearman_srcc(scores, latent);
}

// Verdicts of a judge that prefers the truly better candidate on clear
// pairs. On contested pairs it picks presentation slot 1 with probability
// 0.5 + bias and slot 2 otherwise.
struct SimulatedPair {
  std::string id;
  std::optional<Label> truth;  // empty for contested pairs
};

inline std::vector<JudgeVerdict> simulate_judge(const std::vector<SimulatedPair>& pairs,
                                                double bias, std::uint64_t seed,
                                                bool always_first = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<JudgeVerdict> out;
  for (const auto& p : pairs) {
    for (Direction dir : {Direction::kForward, Direction::kReverse}) {
      JudgeVerdict v;
      v.pair_id = p.id;
      v.direction = dir;
      for (Dimension d : kDimensions) {
        JudgeChoice c;
        if (always_first) {
          c = JudgeChoice::kFirst;
        } else if (p.truth) {
          const bool a_first = dir == Direction::kForward;
          const bool first = (*p.truth == Label::kA) == a_first;
          c = *p.truth == Label::kTie ? JudgeChoice::kTie
                                      : (first ? JudgeChoice::kFirst : JudgeChoice::kSecond);
        } else {
          c = u(rng) < 0.5 + bias ? JudgeChoice::kFirst : JudgeChoice::kSecond;
        }
        v.on(d) = DimensionJudgment{c, std::nullopt, std::nullopt};
      }
      out.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace cmirm::testing

#endif  // CMIRM_TESTS_SUPPORT_HPP_
