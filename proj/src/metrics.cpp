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

#include "cmirm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "cmirm/error.hpp"

namespace cmirm {

namespace {

void check_series(std::span<const double> x, std::span<const double> y, const char* op,
                  std::size_t min_len = 2) {
  if (x.size() != y.size()) {
    throw ContractError(std::string(op) + ": series lengths differ (" +
                        std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < min_len) {
    throw ContractError(std::string(op) + ": need at least " + std::to_string(min_len) +
                        " points");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw NumericError(std::string(op) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

// Merge sort of `v` counting inversions (strict v[i] > v[j], i < j).
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& buf,
                               std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return swaps;
}

// Sum of t(t-1)/2 over runs of equal values in a sorted range.
template <class It, class Eq>
std::uint64_t tied_pairs(It first, It last, Eq eq) {
  std::uint64_t total = 0;
  while (first != last) {
    auto run = first;
    std::uint64_t t = 0;
    while (run != last && eq(*run, *first)) {
      ++run;
      ++t;
    }
    total += t * (t - 1) / 2;
    first = run;
  }
  return total;
}

}  // namespace

double pearson_lcc(std::span<const double> x, std::span<const double> y) {
  check_series(x, y, "pearson_lcc");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DegenerateInputError("pearson_lcc: constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    // Positions i..j (0-based) share the mean of ranks i+1..j+1.
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_srcc(std::span<const double> x, std::span<const double> y) {
  check_series(x, y, "spearman_srcc");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  try {
    return pearson_lcc(rx, ry);
  } catch (const DegenerateInputError&) {
    throw DegenerateInputError("spearman_srcc: all values tied in one series");
  }
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  check_series(x, y, "kendall_tau");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t tx = tied_pairs(order.begin(), order.end(),
                                      [&](std::size_t a, std::size_t b) { return x[a] == x[b]; });
  const std::uint64_t txy = tied_pairs(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] == x[b] && y[a] == y[b];
  });

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::uint64_t discordant = count_inversions(ys, buf, 0, n);
  const std::uint64_t ty = tied_pairs(ys.begin(), ys.end(),
                                      [](double a, double b) { return a == b; });

  if (tx == n0 || ty == n0) throw DegenerateInputError("kendall_tau: all values tied in one series");
  // concordant - discordant over pairs untied in both series.
  const double numer = static_cast<double>(n0) - static_cast<double>(tx) -
                       static_cast<double>(ty) + static_cast<double>(txy) -
                       2.0 * static_cast<double>(discordant);
  const double denom = std::sqrt(static_cast<double>(n0 - tx) * static_cast<double>(n0 - ty));
  return std::clamp(numer / denom, -1.0, 1.0);
}

double pairwise_accuracy(std::span<const double> score_a, std::span<const double> score_b,
                         std::span<const Label> labels) {
  if (score_a.size() != score_b.size() || score_a.size() != labels.size()) {
    throw ContractError("pairwise_accuracy: input lengths differ");
  }
  if (labels.empty()) throw ContractError("pairwise_accuracy: empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Label::kTie) throw ContractError("pairwise_accuracy: tie labels must be filtered");
    const bool predicted_a = score_a[i] > score_b[i];
    const bool predicted_b = score_b[i] > score_a[i];
    if ((labels[i] == Label::kA && predicted_a) || (labels[i] == Label::kB && predicted_b))
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

CrossEntropy binary_ce(std::span<const double> probabilities, std::span<const double> labels) {
  if (probabilities.size() != labels.size()) throw ContractError("binary_ce: input lengths differ");
  if (probabilities.empty()) throw ContractError("binary_ce: empty input");
  constexpr double kLo = 1e-12, kHi = 1.0 - 1e-12;
  CrossEntropy out;
  double total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    double p = probabilities[i];
    const double y = labels[i];
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("binary_ce: probability outside [0, 1]");
    if (!(y >= 0.0 && y <= 1.0)) throw ContractError("binary_ce: label outside [0, 1]");
    if (p < kLo || p > kHi) {
      p = std::clamp(p, kLo, kHi);
      ++out.clamped;
    }
    total += -(y * std::log(p) + (1.0 - y) * std::log1p(-p));
  }
  if (out.clamped > 0) {
    spdlog::warn("binary_ce: clamped {} probabilities at 0 or 1", out.clamped);
  }
  out.value = total / static_cast<double>(probabilities.size());
  return out;
}

double rmse(std::span<const double> x, std::span<const double> y) {
  check_series(x, y, "rmse", 1);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(total / static_cast<double>(x.size()));
}

namespace {

void check_votes(const std::vector<Vote>& votes) {
  for (const auto& v : votes) {
    if (v.choice == Label::kTie) throw ContractError("votes must be A or B");
  }
}

}  // namespace

AgreementStats agreement_rate(const VoteSet& votes, Dimension dimension) {
  AgreementStats s;
  for (const auto& c : votes) {
    const auto& v = c.on(dimension);
    check_votes(v);
    if (v.size() < 2) continue;
    ++s.comparisons;
    s.votes += v.size();
    std::size_t a = 0;
    for (const auto& vote : v) a += vote.choice == Label::kA;
    const std::size_t b = v.size() - a;
    const std::size_t pairs = v.size() * (v.size() - 1) / 2;
    const std::size_t agree = (a * (a - 1) + b * (b - 1)) / 2;
    s.agreeing_pairs += agree;
    s.disagreeing_pairs += pairs - agree;
  }
  if (s.comparisons == 0) throw ContractError("agreement_rate: no comparison has two votes");
  s.rate = static_cast<double>(s.agreeing_pairs) /
           static_cast<double>(s.agreeing_pairs + s.disagreeing_pairs);
  return s;
}

double krippendorff_alpha(const VoteSet& votes, Dimension dimension) {
  // Coincidence matrix over the two nominal values.
  double o[2][2] = {{0, 0}, {0, 0}};
  std::size_t units = 0;
  for (const auto& c : votes) {
    const auto& v = c.on(dimension);
    check_votes(v);
    if (v.size() < 2) continue;
    ++units;
    double counts[2] = {0, 0};
    for (const auto& vote : v) counts[vote.choice == Label::kA ? 0 : 1] += 1;
    const double m = static_cast<double>(v.size());
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q)
        o[p][q] += counts[p] * (counts[q] - (p == q ? 1.0 : 0.0)) / (m - 1.0);
  }
  if (units < 2) throw ContractError("krippendorff_alpha: need two or more multiply-voted comparisons");
  const double n_a = o[0][0] + o[0][1];
  const double n_b = o[1][0] + o[1][1];
  const double n = n_a + n_b;
  const double expected = 2.0 * n_a * n_b;  // sum over c != k of n_c n_k
  if (expected == 0.0) {
    throw DegenerateInputError("krippendorff_alpha: every vote has the same label");
  }
  const double observed = o[0][1] + o[1][0];
  return 1.0 - (n - 1.0) * observed / expected;
}

std::vector<SummaryRule> default_summary_rules() {
  return {
      {"PAM", {{"pam", "srcc_mus"}, {"pam", "srcc_ali"}}},
      {"MusicEval", {{"musiceval", "srcc_mus"}}},
      {"CMI-Pref", {{"cmi_pref", "acc_mus"}, {"cmi_pref", "acc_ali"}}},
      {"Arena", {{"music_arena", "acc_mus"}}},
  };
}

std::vector<SummaryCell> aggregate_benchmark(std::span<const TaskResult> results,
                                             std::span<const SummaryRule> rules) {
  std::map<std::pair<std::string, std::string>, std::optional<double>> index;
  for (const auto& r : results) index[{r.task, r.metric}] = r.value;
  std::vector<SummaryCell> cells;
  for (const auto& rule : rules) {
    SummaryCell cell;
    cell.name = rule.name;
    double total = 0.0;
    for (const auto& key : rule.constituents) {
      auto it = index.find(key);
      if (it == index.end() || !it->second) {
        cell.missing.push_back(key.first + "/" + key.second);
      } else {
        total += *it->second;
      }
    }
    if (cell.missing.empty() && !rule.constituents.empty())
      cell.value = total / static_cast<double>(rule.constituents.size());
    cells.push_back(std::move(cell));
  }
  return cells;
}

}  // namespace cmirm
