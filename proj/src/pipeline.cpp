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

#include "cmirm/pipeline.hpp"

#include <map>

#include "cmirm/error.hpp"

namespace cmirm {

std::string_view to_string(Direction d) {
  return d == Direction::kForward ? "forward" : "reverse";
}

Direction parse_direction(std::string_view s) {
  if (s == "forward") return Direction::kForward;
  if (s == "reverse") return Direction::kReverse;
  throw FormatError("unknown direction '" + std::string(s) + "'");
}

std::string_view to_string(JudgeChoice c) {
  switch (c) {
    case JudgeChoice::kFirst:
      return "first";
    case JudgeChoice::kSecond:
      return "second";
    case JudgeChoice::kTie:
      return "tie";
  }
  return "tie";
}

JudgeChoice parse_judge_choice(std::string_view s) {
  if (s == "first") return JudgeChoice::kFirst;
  if (s == "second") return JudgeChoice::kSecond;
  if (s == "tie") return JudgeChoice::kTie;
  throw FormatError("unknown judge choice '" + std::string(s) + "'");
}

Label underlying_label(Direction direction, JudgeChoice choice) {
  if (choice == JudgeChoice::kTie) return Label::kTie;
  const bool first = choice == JudgeChoice::kFirst;
  if (direction == Direction::kForward) return first ? Label::kA : Label::kB;
  return first ? Label::kB : Label::kA;
}

std::size_t FilterResult::count(std::string_view reason) const {
  std::size_t n = 0;
  for (const auto& d : discarded) n += d.reason == reason;
  return n;
}

namespace {

struct PairPasses {
  const JudgeVerdict* forward = nullptr;
  const JudgeVerdict* reverse = nullptr;
};

std::map<std::string, PairPasses> index_verdicts(std::span<const JudgeVerdict> verdicts) {
  std::map<std::string, PairPasses> pairs;
  for (const auto& v : verdicts) {
    auto& slot = v.direction == Direction::kForward ? pairs[v.pair_id].forward
                                                    : pairs[v.pair_id].reverse;
    if (slot != nullptr) {
      throw DataError("pair " + v.pair_id + " has two " + std::string(to_string(v.direction)) +
                      " verdicts");
    }
    slot = &v;
  }
  return pairs;
}

// Underlying label of one direction for one dimension, if judged.
std::optional<Label> pass_label(const JudgeVerdict* v, Dimension d) {
  if (v == nullptr || !v->on(d)) return std::nullopt;
  return underlying_label(v->direction, v->on(d)->choice);
}

}  // namespace

FilterResult consistency_filter(std::span<const JudgeVerdict> verdicts) {
  FilterResult out;
  for (const auto& [id, passes] : index_verdicts(verdicts)) {
    for (Dimension d : kDimensions) {
      const auto fwd = pass_label(passes.forward, d);
      const auto rev = pass_label(passes.reverse, d);
      if (!fwd && !rev) continue;
      if (!fwd || !rev) {
        out.discarded.push_back({id, d, std::string(kMissingDirection)});
      } else if (*fwd == *rev) {
        out.kept.push_back({id, d, *fwd});
      } else if (*fwd == Label::kTie || *rev == Label::kTie) {
        out.discarded.push_back({id, d, std::string(kInconsistentTie)});
      } else {
        out.discarded.push_back({id, d, std::string(kPositionalConflict)});
      }
    }
  }
  return out;
}

std::array<DistributionRow, 3> bias_report(std::span<const JudgeVerdict> verdicts,
                                           Dimension dimension) {
  std::array<DistributionRow, 3> rows = {DistributionRow{"original"}, DistributionRow{"reversed"},
                                         DistributionRow{"agreed"}};
  std::array<std::array<std::size_t, 3>, 3> counts{};
  auto bump = [&](std::size_t row, Label l) {
    ++counts[row][l == Label::kA ? 0 : l == Label::kB ? 1 : 2];
    ++rows[row].n;
  };
  for (const auto& [id, passes] : index_verdicts(verdicts)) {
    const auto fwd = pass_label(passes.forward, dimension);
    const auto rev = pass_label(passes.reverse, dimension);
    if (!fwd || !rev) continue;
    bump(0, *fwd);
    bump(1, *rev);
    if (*fwd == *rev) bump(2, *fwd);
  }
  if (rows[0].n == 0) {
    throw ContractError("bias_report: no pair was judged in both directions on " +
                        std::string(to_string(dimension)));
  }
  for (std::size_t r = 0; r < 3; ++r) {
    if (rows[r].n == 0) continue;
    const double n = static_cast<double>(rows[r].n);
    rows[r].win_a = 100.0 * static_cast<double>(counts[r][0]) / n;
    rows[r].win_b = 100.0 * static_cast<double>(counts[r][1]) / n;
    rows[r].tie = 100.0 * static_cast<double>(counts[r][2]) / n;
  }
  return rows;
}

RerankChoice best_of_n(const RerankPool& pool) {
  if (pool.n < 1 || pool.n > pool.candidates.size()) {
    throw ContractError("best_of_n: n = " + std::to_string(pool.n) + " with a pool of " +
                        std::to_string(pool.candidates.size()));
  }
  RerankChoice best{0, pool.candidates[0].audio_id, pool.candidates[0].scores.mean()};
  for (std::size_t i = 1; i < pool.n; ++i) {
    const double s = pool.candidates[i].scores.mean();
    if (s > best.score) best = {i, pool.candidates[i].audio_id, s};
  }
  return best;
}

RewardScores score_with_view(Scorer& scorer, const ResolvedPrompt& prompt,
                             const EmbeddingSequence& audio, DurationMode mode) {
  const InferenceView view = select_inference_view(audio, mode);
  if (mode != DurationMode::kMean10) return scorer.score(prompt, view.joined().frames);
  std::vector<const Tensor*> chunks;
  for (const auto& part : view.parts) chunks.push_back(&part.frames);
  const auto scores = scorer.score_all(prompt, chunks);
  RewardScores mean;
  for (const auto& s : scores) {
    mean.ali += s.ali;
    mean.mus += s.mus;
  }
  mean.ali /= static_cast<double>(scores.size());
  mean.mus /= static_cast<double>(scores.size());
  return mean;
}

RewardScores score_with_view(const ResolvedPrompt& prompt, const EmbeddingSequence& audio,
                             const ModelParams& params, const ModelConfig& config,
                             DurationMode mode) {
  Scorer scorer(params, config);
  return score_with_view(scorer, prompt, audio, mode);
}

std::string modality_cell(const PromptBundle& prompt) {
  return std::string(prompt.lyrics ? "song" : "inst") + "/" +
         (prompt.ref_audio ? "with_audio" : "without_audio");
}

}  // namespace cmirm
