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

#ifndef CMIRM_TRAINING_HPP_
#define CMIRM_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cmirm/autodiff.hpp"
#include "cmirm/model.hpp"
#include "cmirm/optimizer.hpp"
#include "cmirm/types.hpp"

namespace cmirm {

struct PreferenceRecord {
  std::string pair_id;
  PromptBundle prompt;
  std::string audio_a;
  std::string audio_b;
  Label label = Label::kA;
  Dimension dimension = Dimension::kMusicality;
  std::optional<int> confidence;  // 1..5
  Source source = Source::kHuman;
};

// Scalar rating y in [1, 5] for one (prompt, audio) pair.
struct RatingRecord {
  PromptBundle prompt;
  std::string audio;
  double y = 3.0;
  Dimension dimension = Dimension::kMusicality;
};

using TrainingRecord = std::variant<PreferenceRecord, RatingRecord>;

// ContractError when a record breaks its invariants (identical candidates,
// confidence outside 1..5, rating outside [1, 5]).
void validate_record(const PreferenceRecord& r);
void validate_record(const RatingRecord& r);

struct TieFilterResult {
  std::vector<PreferenceRecord> kept;
  std::size_t ties_dropped = 0;
};

// Removes tie-labelled pairs; logs a warning with the count when any are
// dropped.
TieFilterResult drop_ties(std::span<const PreferenceRecord> records);

struct TrainConfig {
  std::size_t stage1_steps = 2000;
  std::size_t stage2_max_steps = 1000;
  std::size_t batch_size = 48;
  double label_smoothing = 0.2;
  double reg_a_init = 0.2;
  double reg_b_init = 0.0;
  std::size_t eval_interval = 25;
  // Consecutive non-improving evaluations tolerated before stopping; 0 stops
  // at the first evaluation.
  std::size_t patience = 4;
  std::uint64_t seed = 0;
  AdamConfig adam;

  void validate() const;
};

// (1 - eps) * 1[label = A] + eps / 2.
double smoothed_target(Label label, double eps);

// Bradley-Terry cross-entropy on the score difference with smoothed targets.
// Tie labels raise ContractError.
double bt_pair_loss(double score_a, double score_b, Label label, double eps);
Var bt_pair_loss(Graph& g, Var score_a, Var score_b, Label label, double eps);

// (2 tanh(a s + b) + 3 - y)^2. ContractError when y is outside [1, 5].
double scalar_reg_loss(double s, double y, double a, double b);
Var scalar_reg_loss(Graph& g, Var s, double y, Var a, Var b);

struct BatchLoss {
  double total = 0.0;
  double mus = 0.0;
  double ali = 0.0;
  std::size_t mus_count = 0;
  std::size_t ali_count = 0;
  bool mus_present() const { return mus_count > 0; }
  bool ali_present() const { return ali_count > 0; }
  friend bool operator==(const BatchLoss&, const BatchLoss&) = default;
};

struct BatchLossNodes {
  Var total;
  BatchLoss values;
};

// Records the averaged two-head objective for a batch on `g`. Each record
// contributes to its own dimension's mean; a dimension with no records adds 0.
BatchLossNodes record_batch_loss(Graph& g, const ModelVars& vars, Var reg_a, Var reg_b,
                                 std::span<const TrainingRecord> batch,
                                 const ModelConfig& config, const EmbeddingSource& source,
                                 double eps);

struct RegressionMap {
  double a = 0.2;
  double b = 0.0;
  friend bool operator==(const RegressionMap&, const RegressionMap&) = default;
};

BatchLoss batch_loss(std::span<const TrainingRecord> batch, const ModelParams& params,
                     const ModelConfig& config, const EmbeddingSource& source, double eps,
                     RegressionMap reg = {});

struct StepRecord {
  std::size_t step = 0;  // 1-based optimizer step
  BatchLoss loss;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EvalRecord {
  std::size_t step = 0;
  double criterion = 0.0;
  std::optional<double> mus_accuracy;
  std::optional<double> ali_accuracy;
  std::optional<double> mus_ce;
  std::optional<double> ali_ce;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct StageReport {
  std::string stage;
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;  // validation (stage 2) or monitoring (stage 1)
  std::size_t selected_step = 0;
  double epochs = 0.0;            // informational: steps * batch / records
  RegressionMap regression;       // Stage-2 a, b; not used at inference

  friend bool operator==(const StageReport&, const StageReport&) = default;
};

struct StageResult {
  ModelParams params;
  StageReport report;
};

// Held-out pairwise accuracy per head. Heads without preference pairs fall
// back to the pairs induced by their ratings (pairs with different y).
// Cross-entropy of sigma(s_a - s_b) is reported for preference pairs.
EvalRecord evaluate_records(std::span<const TrainingRecord> records, const ModelParams& params,
                            const ModelConfig& config, const EmbeddingSource& source);

// Stage 1: Bradley-Terry pre-training on tie-free pseudo-labelled pairs for
// exactly config.stage1_steps steps. `monitor` (optional) is evaluated every
// eval_interval steps for the report only.
StageResult train_stage1(std::span<const PreferenceRecord> dataset, const ModelParams& init,
                         const ModelConfig& model_config, const TrainConfig& config,
                         const EmbeddingSource& source,
                         std::span<const TrainingRecord> monitor = {});

// Stage 2: mixed preference + rating fine-tuning with early stopping on the
// validation criterion (mean pairwise accuracy over both heads). Returns the
// best evaluated parameters.
StageResult train_stage2(std::span<const TrainingRecord> train,
                         std::span<const TrainingRecord> validation, const ModelParams& init,
                         const ModelConfig& model_config, const TrainConfig& config,
                         const EmbeddingSource& source);

// Tracks the best validation value; strict improvements only.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // Returns true when training should stop after this evaluation.
  bool update(std::size_t step, double metric);
  bool improved() const { return improved_; }
  std::size_t best_step() const { return best_step_; }
  double best_metric() const { return best_metric_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  std::size_t best_step_ = 0;
  double best_metric_ = 0.0;
  bool have_best_ = false;
  bool improved_ = false;
};

// Deterministic epoch-shuffled batch schedule.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n_records, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
};

}  // namespace cmirm

#endif  // CMIRM_TRAINING_HPP_
