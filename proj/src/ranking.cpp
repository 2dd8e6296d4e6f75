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

#include "cmirm/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "cmirm/error.hpp"
#include "cmirm/metrics.hpp"

namespace cmirm {

namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(sigmoid(x)), stable for large |x|.
double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double head_score(const RewardScores& s, Dimension d) {
  return d == Dimension::kMusicality ? s.mus : s.ali;
}

}  // namespace

BattleSet round_robin_battles(std::span<const ScoredGeneration> generations,
                              Dimension dimension) {
  std::map<std::pair<std::string, std::string>, std::vector<const ScoredGeneration*>> groups;
  for (const auto& g : generations) groups[{g.cell, g.prompt_id}].push_back(&g);

  BattleSet out;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(),
              [](const auto* a, const auto* b) { return a->model < b->model; });
    for (std::size_t i = 1; i < members.size(); ++i) {
      if (members[i]->model == members[i - 1]->model) {
        throw DataError("model " + members[i]->model + " appears twice for prompt " + key.second +
                        " in cell " + key.first);
      }
    }
    if (members.size() < 2) {
      ++out.skipped_groups;
      continue;
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        const double si = head_score(members[i]->scores, dimension);
        const double sj = head_score(members[j]->scores, dimension);
        if (si == sj) {
          ++out.skipped_ties;
          continue;
        }
        out.battles.push_back(Battle{key.second, key.first, dimension, members[i]->model,
                                     members[j]->model, si > sj ? Label::kA : Label::kB});
      }
    }
  }
  if (out.skipped_groups > 0) {
    spdlog::warn("round robin: skipped {} prompt groups with fewer than two models",
                 out.skipped_groups);
  }
  if (out.skipped_ties > 0) {
    spdlog::warn("round robin: skipped {} exactly tied pairs", out.skipped_ties);
  }
  return out;
}

const RatingEntry& RatingTable::at(std::string_view model) const {
  for (const auto& e : entries)
    if (e.model == model) return e;
  throw DataError("model " + std::string(model) + " not in rating table");
}

double scale_rating(double raw) { return raw * 400.0 + 1500.0; }

RatingTable scale_ratings(RatingTable table) {
  for (auto& e : table.entries) e.scaled = scale_rating(e.raw);
  return table;
}

namespace {

struct ComponentFit {
  std::vector<double> ratings;
  std::size_t iterations = 0;
  bool converged = false;
};

// Penalized log-likelihood of ratings r given win counts.
double objective(const Eigen::MatrixXd& wins, const Eigen::VectorXd& r, double ridge) {
  double ll = 0.0;
  const Eigen::Index m = r.size();
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (wins(i, j) > 0.0) ll += wins(i, j) * log_sigmoid(r(i) - r(j));
  return ll - 0.5 * ridge * r.squaredNorm();
}

// Damped Newton ascent. The Hessian of the likelihood is a negative weighted
// graph Laplacian; adding 11^T removes the translation null space while the
// iterates stay mean-zero.
ComponentFit fit_component(const Eigen::MatrixXd& wins, double ridge, const BtFitOptions& opt) {
  const Eigen::Index m = wins.rows();
  ComponentFit fit;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(m);
  double f = objective(wins, r, ridge);
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    Eigen::VectorXd grad = -ridge * r;
    Eigen::MatrixXd info = Eigen::MatrixXd::Identity(m, m) * ridge;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (i == j) continue;
        const double n = wins(i, j) + wins(j, i);
        if (n == 0.0) continue;
        const double p = sigmoid(r(i) - r(j));
        grad(i) += wins(i, j) - n * p;
        const double w = n * p * (1.0 - p);
        info(i, i) += w;
        info(i, j) -= w;
      }
    }
    if (grad.norm() < opt.gradient_tolerance) {
      fit.converged = true;
      fit.iterations = it;
      break;
    }
    info.array() += 1.0;
    Eigen::VectorXd delta = info.ldlt().solve(grad);
    delta.array() -= delta.mean();
    double t = 1.0;
    Eigen::VectorXd next = r + delta;
    double f_next = objective(wins, next, ridge);
    while (f_next < f && t > 1e-12) {
      t *= 0.5;
      next = r + t * delta;
      f_next = objective(wins, next, ridge);
    }
    const double change = (next - r).cwiseAbs().maxCoeff();
    r = next;
    f = f_next;
    fit.iterations = it + 1;
    if (change < opt.step_tolerance) {
      fit.converged = true;
      break;
    }
  }
  r.array() -= r.mean();
  fit.ratings.assign(r.data(), r.data() + m);
  return fit;
}

// True when every node reaches every other along win edges in both
// directions, which is the condition for a finite unpenalized maximum.
bool strongly_connected(const Eigen::MatrixXd& wins) {
  const Eigen::Index m = wins.rows();
  auto reach_all = [&](bool forward) {
    std::vector<bool> seen(m, false);
    std::vector<Eigen::Index> stack = {0};
    seen[0] = true;
    while (!stack.empty()) {
      const Eigen::Index i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < m; ++j) {
        const double w = forward ? wins(i, j) : wins(j, i);
        if (w > 0.0 && !seen[j]) {
          seen[j] = true;
          stack.push_back(j);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](bool s) { return s; });
  };
  return reach_all(true) && reach_all(false);
}

}  // namespace

RatingTable bt_fit(std::span<const Battle> battles, const BtFitOptions& options) {
  RatingTable table;
  if (battles.empty()) return table;
  table.cell = battles.front().cell;
  table.dimension = battles.front().dimension;

  std::map<std::string, std::size_t> index;
  for (const auto& b : battles) {
    if (b.cell != table.cell || b.dimension != table.dimension) {
      throw ContractError("bt_fit: battles span more than one cell or dimension");
    }
    if (b.model_a == b.model_b) throw ContractError("bt_fit: battle of a model against itself");
    if (b.outcome == Label::kTie) throw ContractError("bt_fit: tie outcomes are not battles");
    index.emplace(b.model_a, 0);
    index.emplace(b.model_b, 0);
  }
  std::size_t next = 0;
  for (auto& [name, i] : index) i = next++;
  const std::size_t m = index.size();

  // Union-find over the undirected comparison graph.
  std::vector<std::size_t> parent(m);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };

  Eigen::MatrixXd wins = Eigen::MatrixXd::Zero(m, m);
  std::vector<std::size_t> counts(m, 0);
  for (const auto& b : battles) {
    const std::size_t a = index[b.model_a], c = index[b.model_b];
    if (b.outcome == Label::kA) {
      wins(a, c) += 1.0;
    } else {
      wins(c, a) += 1.0;
    }
    ++counts[a];
    ++counts[c];
    parent[find(a)] = find(c);
  }

  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t i = 0; i < m; ++i) components[find(i)].push_back(i);

  table.entries.resize(m);
  for (const auto& [name, i] : index) {
    table.entries[i].model = name;
    table.entries[i].n_battles = counts[i];
  }
  std::size_t component_id = 0;
  for (const auto& [root, members] : components) {
    const Eigen::Index k = static_cast<Eigen::Index>(members.size());
    Eigen::MatrixXd sub(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) sub(i, j) = wins(members[i], members[j]);
    const bool bounded = strongly_connected(sub);
    const ComponentFit fit = fit_component(sub, bounded ? 0.0 : options.ridge, options);
    table.iterations += fit.iterations;
    table.converged = table.converged && fit.converged;
    for (Eigen::Index i = 0; i < k; ++i) {
      auto& e = table.entries[members[i]];
      e.raw = fit.ratings[i];
      e.component = component_id;
      const double won = sub.row(i).sum(), lost = sub.col(i).sum();
      e.boundary_unstable = !bounded && (won == 0.0 || lost == 0.0);
    }
    if (!bounded) {
      spdlog::warn("bt_fit: component {} of cell {} has no finite maximum; fitted with ridge {}",
                   component_id, table.cell, options.ridge);
    }
    ++component_id;
  }
  table.components = component_id;
  if (!table.converged) spdlog::warn("bt_fit: iteration cap reached for cell {}", table.cell);
  return scale_ratings(std::move(table));
}

std::vector<RatingTable> fit_leaderboard(std::span<const Battle> battles,
                                         const BtFitOptions& options) {
  std::map<std::pair<std::string, std::size_t>, std::vector<Battle>> groups;
  for (const auto& b : battles) groups[{b.cell, head_index(b.dimension)}].push_back(b);
  std::vector<RatingTable> tables;
  for (const auto& [key, group] : groups) tables.push_back(bt_fit(group, options));
  return tables;
}

double win_probability(const RatingTable& table, std::string_view a, std::string_view b) {
  const auto& ea = table.at(a);
  const auto& eb = table.at(b);
  if (ea.component != eb.component) {
    throw ContractError("models " + ea.model + " and " + eb.model +
                        " are in different comparison components");
  }
  return sigmoid(ea.raw - eb.raw);
}

double LogisticFit::predict(const PrefFeature& x) const {
  return sigmoid(coef_mus * x.delta_mus + coef_ali * x.delta_ali + intercept);
}

namespace {

void check_logistic_input(std::span<const PrefFeature> features, std::span<const int> labels) {
  if (features.size() != labels.size()) throw ContractError("logistic: input lengths differ");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("logistic: labels must be 0 or 1");
    if (!std::isfinite(features[i].delta_mus) || !std::isfinite(features[i].delta_ali))
      throw NumericError("logistic: non-finite feature at index " + std::to_string(i));
    pos += labels[i];
  }
  if (pos < 2 || labels.size() - pos < 2) {
    throw ContractError("logistic: each class needs at least two examples");
  }
}

// Mean negative log-likelihood at w = (mus, ali, intercept), with its
// gradient and Hessian when requested.
double logistic_loss(std::span<const PrefFeature> x, std::span<const int> y,
                     const Eigen::Vector3d& w, Eigen::Vector3d* grad = nullptr,
                     Eigen::Matrix3d* hess = nullptr) {
  double loss = 0.0;
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Eigen::Vector3d xi(x[i].delta_mus, x[i].delta_ali, 1.0);
    const double z = w.dot(xi);
    loss -= y[i] ? log_sigmoid(z) : log_sigmoid(-z);
    const double p = sigmoid(z);
    g += (p - y[i]) * xi;
    h += p * (1.0 - p) * xi * xi.transpose();
  }
  const double n = static_cast<double>(x.size());
  if (grad) *grad = g / n;
  if (hess) *hess = h / n;
  return loss / n;
}

// True when every example lies strictly on its label's side of the boundary.
bool separates(std::span<const PrefFeature> x, std::span<const int> y, const Eigen::Vector3d& w) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = w[0] * x[i].delta_mus + w[1] * x[i].delta_ali + w[2];
    if ((y[i] ? z : -z) <= 0.0) return false;
  }
  return true;
}

}  // namespace

LogisticFit logistic_pref_fit(std::span<const PrefFeature> features, std::span<const int> labels,
                              const LogisticOptions& options) {
  check_logistic_input(features, labels);
  Eigen::Vector3d w = Eigen::Vector3d::Zero(), g;
  Eigen::Matrix3d h;
  double f = logistic_loss(features, labels, w, &g, &h);
  LogisticFit fit;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    if (g.norm() < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::Vector3d step = h.ldlt().solve(g);
    if (!step.allFinite() || step.dot(g) <= 0.0) step = g;
    // Backtracking on the loss; a step that cannot lower it ends the search.
    double t = 1.0;
    Eigen::Vector3d trial;
    double f_trial;
    for (;;) {
      trial = w - t * step;
      f_trial = logistic_loss(features, labels, trial);
      if (f_trial <= f - 1e-4 * t * step.dot(g) || t < 1e-12) break;
      t *= 0.5;
    }
    fit.iterations = it + 1;
    if (!(f_trial < f)) break;
    w = trial;
    f = logistic_loss(features, labels, w, &g, &h);
  }
  fit.coef_mus = w[0];
  fit.coef_ali = w[1];
  fit.intercept = w[2];
  if (!fit.converged && g.norm() < std::sqrt(options.gradient_tolerance)) {
    spdlog::debug("logistic_pref_fit: stopped at the precision limit, |g| = {:.3g}", g.norm());
    fit.converged = true;
  }
  if (separates(features, labels, w) || (!fit.converged && f < 1e-3)) {
    fit.converged = false;
    fit.separable = true;
    spdlog::warn("logistic_pref_fit: data are separable (loss {:.3g}); coefficients are unbounded",
                 f);
  } else if (!fit.converged) {
    spdlog::warn("logistic_pref_fit: iteration cap reached (loss {:.3g})", f);
  }
  fit.train_accuracy = evaluate_logistic(fit, features, labels).accuracy;
  return fit;
}

ClassifierScores evaluate_logistic(const LogisticFit& fit, std::span<const PrefFeature> features,
                                   std::span<const int> labels) {
  if (features.size() != labels.size() || features.empty()) {
    throw ContractError("evaluate_logistic: need matching, non-empty inputs");
  }
  std::vector<double> p(features.size());
  std::size_t correct = 0, pos = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    p[i] = fit.predict(features[i]);
    correct += (p[i] > 0.5) == (labels[i] == 1);
    pos += labels[i] == 1;
  }
  ClassifierScores out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(features.size());
  const std::size_t neg = features.size() - pos;
  if (pos == 0 || neg == 0) {
    out.auc = std::nan("");
    return out;
  }
  // Rank-sum form of the Mann-Whitney statistic; average ranks give ties 1/2.
  const auto ranks = average_ranks(p);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) rank_sum += ranks[i];
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  out.auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
  return out;
}

ClassifierScores cross_validate_logistic(std::span<const PrefFeature> features,
                                         std::span<const int> labels, std::size_t folds,
                                         std::uint64_t seed, const LogisticOptions& options) {
  if (folds < 2 || folds > features.size()) throw ContractError("cross validation needs 2..n folds");
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

  ClassifierScores total;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * order.size() / folds, hi = (f + 1) * order.size() / folds;
    std::vector<PrefFeature> xtr, xte;
    std::vector<int> ytr, yte;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const bool test = i >= lo && i < hi;
      (test ? xte : xtr).push_back(features[order[i]]);
      (test ? yte : ytr).push_back(labels[order[i]]);
    }
    const auto s = evaluate_logistic(logistic_pref_fit(xtr, ytr, options), xte, yte);
    total.accuracy += s.accuracy;
    total.auc += s.auc;
  }
  total.accuracy /= static_cast<double>(folds);
  total.auc /= static_cast<double>(folds);
  return total;
}

}  // namespace cmirm
