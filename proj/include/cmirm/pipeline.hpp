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

#ifndef CMIRM_PIPELINE_HPP_
#define CMIRM_PIPELINE_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmirm/embeddings.hpp"
#include "cmirm/model.hpp"
#include "cmirm/types.hpp"

namespace cmirm {

// Presentation order of one judge pass. Forward shows (audio_a, audio_b);
// reverse shows (audio_b, audio_a).
enum class Direction { kForward, kReverse };

// Slot the judge preferred, in presentation terms.
enum class JudgeChoice { kFirst, kSecond, kTie };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);
std::string_view to_string(JudgeChoice c);
JudgeChoice parse_judge_choice(std::string_view s);

struct DimensionJudgment {
  JudgeChoice choice = JudgeChoice::kTie;
  std::optional<int> score_first;  // 1..10
  std::optional<int> score_second;
};

struct JudgeVerdict {
  std::string pair_id;
  Direction direction = Direction::kForward;
  std::array<std::optional<DimensionJudgment>, 2> judgments;  // by head_index

  std::optional<DimensionJudgment>& on(Dimension d) { return judgments[head_index(d)]; }
  const std::optional<DimensionJudgment>& on(Dimension d) const {
    return judgments[head_index(d)];
  }
};

// Maps a presentation-order choice to the stored candidate it refers to.
Label underlying_label(Direction direction, JudgeChoice choice);

inline constexpr std::string_view kMissingDirection = "missing direction";
inline constexpr std::string_view kPositionalConflict = "positional conflict";
inline constexpr std::string_view kInconsistentTie = "inconsistent tie";

struct KeptLabel {
  std::string pair_id;
  Dimension dimension = Dimension::kMusicality;
  Label label = Label::kA;  // underlying candidate; consistent ties kept as kTie

  friend bool operator==(const KeptLabel&, const KeptLabel&) = default;
};

struct DiscardedLabel {
  std::string pair_id;
  Dimension dimension = Dimension::kMusicality;
  std::string reason;

  friend bool operator==(const DiscardedLabel&, const DiscardedLabel&) = default;
};

struct FilterResult {
  std::vector<KeptLabel> kept;            // ordered by pair id, then dimension
  std::vector<DiscardedLabel> discarded;  // same order
  std::size_t count(std::string_view reason) const;
};

// Position-consistency filter, applied to each dimension independently. A
// label survives iff both passes pick the same stored candidate or both
// report a tie. DataError on two verdicts for one (pair, direction).
FilterResult consistency_filter(std::span<const JudgeVerdict> verdicts);

struct DistributionRow {
  std::string name;  // "original", "reversed" or "agreed"
  double win_a = 0.0;  // percentages in stored-candidate terms
  double win_b = 0.0;
  double tie = 0.0;
  std::size_t n = 0;
};

// Label distribution of the forward pass, the reverse pass and the agreed
// (kept) labels over pairs judged in both directions on `dimension`.
// ContractError when no pair has both directions.
std::array<DistributionRow, 3> bias_report(std::span<const JudgeVerdict> verdicts,
                                           Dimension dimension);

struct RerankCandidate {
  std::string audio_id;
  RewardScores scores;
};

struct RerankPool {
  std::string prompt_id;
  std::vector<RerankCandidate> candidates;  // generation order
  std::size_t n = 1;
};

struct RerankChoice {
  std::size_t index = 0;
  std::string audio_id;
  double score = 0.0;  // (s_mus + s_ali) / 2
};

// Argmax of the mean head score over the first n candidates; the earliest
// candidate wins ties. ContractError unless 1 <= n <= pool size.
RerankChoice best_of_n(const RerankPool& pool);

// Scores one clip under a duration strategy: first10 and first120 score a
// single view; mean10 averages both heads over independently scored chunks.
RewardScores score_with_view(const ResolvedPrompt& prompt, const EmbeddingSequence& audio,
                             const ModelParams& params, const ModelConfig& config,
                             DurationMode mode);
RewardScores score_with_view(Scorer& scorer, const ResolvedPrompt& prompt,
                             const EmbeddingSequence& audio, DurationMode mode);

// "inst" or "song" (lyrics present) joined with "with_audio" or
// "without_audio" (reference audio present).
std::string modality_cell(const PromptBundle& prompt);

}  // namespace cmirm

#endif  // CMIRM_PIPELINE_HPP_
