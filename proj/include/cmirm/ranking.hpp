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

#ifndef CMIRM_RANKING_HPP_
#define CMIRM_RANKING_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmirm/model.hpp"
#include "cmirm/types.hpp"

namespace cmirm {

// One model's output for one prompt, already scored by the reward model.
struct ScoredGeneration {
  std::string prompt_id;
  std::string cell;  // modality cell, e.g. "inst/with_audio"
  std::string model;
  RewardScores scores;
};

struct Battle {
  std::string prompt_id;
  std::string cell;
  Dimension dimension = Dimension::kMusicality;
  std::string model_a;
  std::string model_b;
  Label outcome = Label::kA;  // A or B

  friend bool operator==(const Battle&, const Battle&) = default;
};

struct BattleSet {
  std::vector<Battle> battles;
  std::size_t skipped_groups = 0;  // (cell, prompt) groups with fewer than two models
  std::size_t skipped_ties = 0;    // pairs with exactly equal scores
};

// All C(m, 2) pairings inside each (cell, prompt) group on the given head.
// Groups are visited in (cell, prompt) order and models in name order, with
// model_a the lexicographically smaller name. DataError if a model appears
// twice in one group.
BattleSet round_robin_battles(std::span<const ScoredGeneration> generations,
                              Dimension dimension);

struct RatingEntry {
  std::string model;
  double raw = 0.0;
  double scaled = 1500.0;
  std::size_t n_battles = 0;
  std::size_t component = 0;  // ratings are only comparable within a component
  bool boundary_unstable = false;
};

struct RatingTable {
  std::string cell;
  Dimension dimension = Dimension::kMusicality;
  std::vector<RatingEntry> entries;  // sorted by model name
  std::size_t components = 0;
  std::size_t iterations = 0;  // Newton iterations summed over components
  bool converged = true;

  const RatingEntry& at(std::string_view model) const;  // DataError if absent
};

struct BtFitOptions {
  // Ridge used only for components whose win graph is not strongly connected.
  double ridge = 1e-4;
  double step_tolerance = 1e-8;
  double gradient_tolerance = 1e-10;
  std::size_t max_iterations = 200;
};

// Maximum-likelihood Bradley-Terry ratings, P(a beats b) = sigma(r_a - r_b),
// fitted per weakly connected component and mean-centred within it. Every
// battle must share one cell and dimension (ContractError otherwise); an
// empty list yields an empty table. Scaled ratings are filled in.
RatingTable bt_fit(std::span<const Battle> battles, const BtFitOptions& options = {});

// scaled = raw * 400 + 1500.
double scale_rating(double raw);
RatingTable scale_ratings(RatingTable table);

// Splits battles by (cell, dimension) and fits each group separately.
std::vector<RatingTable> fit_leaderboard(std::span<const Battle> battles,
                                         const BtFitOptions& options = {});

// Predicted probability that `a` beats `b`; ContractError across components.
double win_probability(const RatingTable& table, std::string_view a, std::string_view b);

// Per-pair score differences (candidate A minus candidate B).
struct PrefFeature {
  double delta_mus = 0.0;
  double delta_ali = 0.0;
};

struct LogisticOptions {
  double gradient_tolerance = 1e-8;
  std::size_t max_iterations = 1000;
};

struct LogisticFit {
  double coef_mus = 0.0;
  double coef_ali = 0.0;
  double intercept = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  // The fit separates the classes perfectly (or the iteration cap was hit
  // with a vanishing loss); the maximum-likelihood coefficients are unbounded.
  bool separable = false;
  double train_accuracy = 0.0;

  double predict(const PrefFeature& x) const;  // P(label = 1)
};

// Unregularized logistic regression by damped Newton steps with backtracking
// on the mean negative log-likelihood. labels are 0/1 and each
// class needs at least two examples (ContractError).
LogisticFit logistic_pref_fit(std::span<const PrefFeature> features,
                              std::span<const int> labels,
                              const LogisticOptions& options = {});

struct ClassifierScores {
  double accuracy = 0.0;
  double auc = 0.0;  // Mann-Whitney; tied scores count one half
};

ClassifierScores evaluate_logistic(const LogisticFit& fit, std::span<const PrefFeature> features,
                                   std::span<const int> labels);

// Mean held-out scores over k contiguous folds after a seeded shuffle.
ClassifierScores cross_validate_logistic(std::span<const PrefFeature> features,
                                         std::span<const int> labels, std::size_t folds,
                                         std::uint64_t seed,
                                         const LogisticOptions& options = {});

}  // namespace cmirm

#endif  // CMIRM_RANKING_HPP_
