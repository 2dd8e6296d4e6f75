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

#ifndef CMIRM_METRICS_HPP_
#define CMIRM_METRICS_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmirm/types.hpp"

namespace cmirm {

// Correlation statistics between predictions and references. All of them
// throw ContractError on length mismatch or fewer than two points,
// NumericError on non-finite values, and DegenerateInputError where the
// statistic is undefined (constant series, all ties).
double pearson_lcc(std::span<const double> x, std::span<const double> y);
double spearman_srcc(std::span<const double> x, std::span<const double> y);
// Tie-corrected tau-b, O(n log n).
double kendall_tau(std::span<const double> x, std::span<const double> y);

// 1-based ranks; tied values share the average of the ranks they span.
std::vector<double> average_ranks(std::span<const double> v);

// Fraction of pairs whose score order matches the label. Exact score ties
// count as incorrect. Labels must be A or B.
double pairwise_accuracy(std::span<const double> score_a, std::span<const double> score_b,
                         std::span<const Label> labels);

struct CrossEntropy {
  double value = 0.0;
  std::size_t clamped = 0;  // probabilities moved off 0 or 1
};

// Mean of -[y log p + (1-y) log(1-p)]. Probabilities at exactly 0 or 1 are
// clamped to [1e-12, 1 - 1e-12] with a logged warning.
CrossEntropy binary_ce(std::span<const double> probabilities, std::span<const double> labels);

double rmse(std::span<const double> x, std::span<const double> y);

struct Vote {
  Label choice = Label::kA;  // A or B
  std::optional<std::string> annotator;
  std::optional<int> confidence;
};

// All votes cast on one comparison, per dimension.
struct VoteComparison {
  std::string id;
  std::array<std::vector<Vote>, 2> votes;  // indexed by head_index(Dimension)

  std::vector<Vote>& on(Dimension d) { return votes[head_index(d)]; }
  const std::vector<Vote>& on(Dimension d) const { return votes[head_index(d)]; }
};

using VoteSet = std::vector<VoteComparison>;

struct AgreementStats {
  double rate = 0.0;
  std::size_t agreeing_pairs = 0;
  std::size_t disagreeing_pairs = 0;
  std::size_t comparisons = 0;  // comparisons with at least two votes
  std::size_t votes = 0;        // votes on those comparisons
};

// Agreement over all unordered vote pairs inside multiply-voted comparisons.
// ContractError when no comparison has two votes.
AgreementStats agreement_rate(const VoteSet& votes, Dimension dimension);

// Nominal-data Krippendorff alpha from the coincidence matrix. Needs two or
// more comparisons with two or more votes (ContractError) and some expected
// disagreement (DegenerateInputError).
double krippendorff_alpha(const VoteSet& votes, Dimension dimension);

// One measured value of the benchmark. A missing value marks a cell that
// could not be computed.
struct TaskResult {
  std::string task;
  std::string metric;
  std::optional<double> value;
  std::size_t n = 0;
  std::string note;
};

// A summary cell averages its constituent (task, metric) values.
struct SummaryRule {
  std::string name;
  std::vector<std::pair<std::string, std::string>> constituents;
};

struct SummaryCell {
  std::string name;
  std::optional<double> value;          // absent when incomplete
  std::vector<std::string> missing;     // "task/metric" of absent constituents
  bool complete() const { return value.has_value(); }
};

// PAM = mean SRCC over musicality and alignment; CMI-Pref = mean accuracy
// over both heads; MusicEval = musicality SRCC; Arena = musicality-head
// accuracy.
std::vector<SummaryRule> default_summary_rules();

std::vector<SummaryCell> aggregate_benchmark(std::span<const TaskResult> results,
                                             std::span<const SummaryRule> rules);

}  // namespace cmirm

#endif  // CMIRM_METRICS_HPP_
