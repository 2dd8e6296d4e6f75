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
#include <random>

#include <gtest/gtest.h>

#include "cmirm/error.hpp"

namespace cmirm {
namespace {

ScoredGeneration gen(std::string prompt, std::string model, double mus, double ali = 0.0,
                     std::string cell = "inst/with_audio") {
  return ScoredGeneration{std::move(prompt), std::move(cell), std::move(model),
                          RewardScores{ali, mus}};
}

Battle battle(std::string a, std::string b, Label outcome) {
  return Battle{"p", "inst/with_audio", Dimension::kMusicality, std::move(a), std::move(b),
                outcome};
}

std::vector<Battle> wins(const std::string& a, const std::string& b, int a_wins, int b_wins) {
  std::vector<Battle> out;
  for (int i = 0; i < a_wins; ++i) out.push_back(battle(a, b, Label::kA));
  for (int i = 0; i < b_wins; ++i) out.push_back(battle(a, b, Label::kB));
  return out;
}

TEST(RoundRobinTest, ThreeModelsGiveThreeBattles) {
  const std::vector<ScoredGeneration> g = {gen("p1", "m3", 0.1), gen("p1", "m1", 2.0),
                                           gen("p1", "m2", 1.0)};
  const BattleSet set = round_robin_battles(g, Dimension::kMusicality);
  ASSERT_EQ(set.battles.size(), 3u);
  EXPECT_EQ(set.battles[0], (Battle{"p1", "inst/with_audio", Dimension::kMusicality, "m1", "m2",
                                    Label::kA}));
  EXPECT_EQ(set.battles[1].model_b, "m3");
  EXPECT_EQ(set.battles[2].model_a, "m2");
  EXPECT_EQ(set.battles[2].outcome, Label::kA);
}

TEST(RoundRobinTest, UsesTheRequestedHead) {
  const std::vector<ScoredGeneration> g = {gen("p", "a", 2.0, 0.0), gen("p", "b", 1.0, 5.0)};
  EXPECT_EQ(round_robin_battles(g, Dimension::kMusicality).battles[0].outcome, Label::kA);
  EXPECT_EQ(round_robin_battles(g, Dimension::kAlignment).battles[0].outcome, Label::kB);
}

TEST(RoundRobinTest, FourPromptsFourModelsMatchesHandEnumeration) {
  std::vector<ScoredGeneration> g;
  const std::vector<std::string> models = {"d", "b", "a", "c"};
  for (int p = 3; p >= 0; --p)
    for (std::size_t m = 0; m < 4; ++m)
      g.push_back(gen("p" + std::to_string(p), models[m], std::sin(7.0 * p + 3.0 * m)));
  const BattleSet set = round_robin_battles(g, Dimension::kMusicality);
  ASSERT_EQ(set.battles.size(), 24u);
  const std::vector<std::string> sorted = {"a", "b", "c", "d"};
  std::size_t k = 0;
  for (int p = 0; p < 4; ++p)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j) {
        const Battle& b = set.battles[k++];
        EXPECT_EQ(b.prompt_id, "p" + std::to_string(p));
        EXPECT_EQ(b.model_a, sorted[i]);
        EXPECT_EQ(b.model_b, sorted[j]);
        auto score = [&](const std::string& name) {
          const auto idx = std::find(models.begin(), models.end(), name) - models.begin();
          return std::sin(7.0 * p + 3.0 * static_cast<double>(idx));
        };
        EXPECT_EQ(b.outcome, score(sorted[i]) > score(sorted[j]) ? Label::kA : Label::kB);
      }
}

TEST(RoundRobinTest, SkipsSmallGroupsAndTies) {
  const std::vector<ScoredGeneration> g = {gen("lonely", "a", 1.0), gen("p", "a", 1.0),
                                           gen("p", "b", 1.0), gen("p", "c", 0.5)};
  const BattleSet set = round_robin_battles(g, Dimension::kMusicality);
  EXPECT_EQ(set.skipped_groups, 1u);
  EXPECT_EQ(set.skipped_ties, 1u);
  EXPECT_EQ(set.battles.size(), 2u);
  const std::vector<ScoredGeneration> dup = {gen("p", "a", 1.0), gen("p", "a", 2.0)};
  EXPECT_THROW(round_robin_battles(dup, Dimension::kMusicality), DataError);
}

TEST(RoundRobinTest, GroupsByCell) {
  const std::vector<ScoredGeneration> g = {gen("p", "a", 1.0, 0, "song/with_audio"),
                                           gen("p", "b", 2.0, 0, "inst/with_audio")};
  EXPECT_EQ(round_robin_battles(g, Dimension::kMusicality).skipped_groups, 2u);
}

double log_likelihood(double gap, int a_wins, int b_wins) {
  return a_wins * -std::log1p(std::exp(-gap)) + b_wins * -std::log1p(std::exp(gap));
}

TEST(BtFitTest, ThreeOfFourMatchesGridOracle) {
  const RatingTable t = bt_fit(wins("alpha", "beta", 3, 1));
  const double gap = t.at("alpha").raw - t.at("beta").raw;
  double best = 0.0, best_ll = -1e300;
  for (double d = -5.0; d <= 5.0; d += 1e-4) {
    const double ll = log_likelihood(d, 3, 1);
    if (ll > best_ll) {
      best_ll = ll;
      best = d;
    }
  }
  EXPECT_NEAR(gap, best, 1e-3);
  EXPECT_NEAR(gap, std::log(3.0), 1e-6);
  EXPECT_NEAR(t.at("alpha").scaled - t.at("beta").scaled, 439.4, 0.5);
  EXPECT_NEAR(t.at("alpha").raw + t.at("beta").raw, 0.0, 1e-12);
  EXPECT_TRUE(t.converged);
  EXPECT_FALSE(t.at("alpha").boundary_unstable);
  EXPECT_EQ(t.at("alpha").n_battles, 4u);
}

TEST(BtFitTest, TwoModelWinRateIsReproduced) {
  for (auto [a, b] : {std::pair{1, 1}, {5, 2}, {1, 9}, {13, 4}}) {
    const RatingTable t = bt_fit(wins("x", "y", a, b));
    EXPECT_NEAR(win_probability(t, "x", "y"), static_cast<double>(a) / (a + b), 1e-9);
  }
  const RatingTable even = bt_fit(wins("x", "y", 1, 1));
  EXPECT_NEAR(even.at("x").raw, 0.0, 1e-12);
  EXPECT_NEAR(even.at("y").raw, 0.0, 1e-12);
}

TEST(BtFitTest, RecoversPlantedOrdering) {
  const std::vector<std::string> names = {"m0", "m1", "m2", "m3"};
  const std::vector<double> planted = {-1.0, 0.4, -0.3, 1.2};
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Battle> battles;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      for (int k = 0; k < 200; ++k) {
        const double p = 1.0 / (1.0 + std::exp(planted[j] - planted[i]));
        battles.push_back(battle(names[i], names[j], u(rng) < p ? Label::kA : Label::kB));
      }
  const RatingTable t = bt_fit(battles);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (planted[i] < planted[j]) {
        EXPECT_LT(t.at(names[i]).raw, t.at(names[j]).raw);
      }
  double mean = 0.0;
  for (const auto& e : t.entries) mean += e.raw / 4.0;
  EXPECT_NEAR(mean, 0.0, 1e-12);
}

TEST(BtFitTest, ExtraWinRaisesTheWinner) {
  auto battles = wins("a", "b", 3, 2);
  auto more = battles;
  for (const auto& b : wins("b", "c", 2, 2)) {
    battles.push_back(b);
    more.push_back(b);
  }
  more.push_back(battle("a", "b", Label::kA));
  const RatingTable base = bt_fit(battles), after = bt_fit(more);
  EXPECT_GT(after.at("a").raw - after.at("b").raw, base.at("a").raw - base.at("b").raw);
}

TEST(BtFitTest, OrderOfBattlesDoesNotMatter) {
  auto battles = wins("a", "b", 3, 2);
  for (const auto& b : wins("c", "b", 1, 4)) battles.push_back(b);
  for (const auto& b : wins("a", "c", 2, 2)) battles.push_back(b);
  const RatingTable t = bt_fit(battles);
  std::reverse(battles.begin(), battles.end());
  const RatingTable r = bt_fit(battles);
  for (std::size_t i = 0; i < t.entries.size(); ++i)
    EXPECT_NEAR(t.entries[i].raw, r.entries[i].raw, 1e-10);
}

TEST(BtFitTest, SeparateComponents) {
  auto battles = wins("a", "b", 2, 1);
  for (const auto& b : wins("c", "d", 1, 3)) battles.push_back(b);
  const RatingTable t = bt_fit(battles);
  EXPECT_EQ(t.components, 2u);
  EXPECT_NE(t.at("a").component, t.at("c").component);
  EXPECT_NEAR(t.at("a").raw + t.at("b").raw, 0.0, 1e-12);
  EXPECT_NEAR(t.at("c").raw + t.at("d").raw, 0.0, 1e-12);
  EXPECT_THROW(win_probability(t, "a", "c"), ContractError);
  EXPECT_THROW(t.at("zzz"), DataError);
}

TEST(BtFitTest, AllWinsAreFlaggedAndFinite) {
  auto battles = wins("top", "mid", 4, 0);
  for (const auto& b : wins("mid", "low", 2, 1)) battles.push_back(b);
  const RatingTable t = bt_fit(battles);
  EXPECT_TRUE(t.at("top").boundary_unstable);
  EXPECT_FALSE(t.at("mid").boundary_unstable);
  EXPECT_FALSE(t.at("low").boundary_unstable);
  for (const auto& e : t.entries) EXPECT_TRUE(std::isfinite(e.raw));
  EXPECT_GT(t.at("top").raw, t.at("mid").raw);
}

TEST(BtFitTest, RejectsMixedGroups) {
  auto battles = wins("a", "b", 1, 1);
  battles[1].dimension = Dimension::kAlignment;
  EXPECT_THROW(bt_fit(battles), ContractError);
  EXPECT_TRUE(bt_fit({}).entries.empty());
}

TEST(BtFitTest, LeaderboardSplitsByCellAndDimension) {
  auto battles = wins("a", "b", 3, 1);
  for (auto b : wins("a", "b", 1, 3)) {
    b.cell = "song/without_audio";
    battles.push_back(b);
  }
  const auto tables = fit_leaderboard(battles);
  ASSERT_EQ(tables.size(), 2u);
  EXPECT_EQ(tables[0].cell, "inst/with_audio");
  EXPECT_GT(tables[0].at("a").raw, 0.0);
  EXPECT_LT(tables[1].at("a").raw, 0.0);
}

TEST(ScaleTest, Values) {
  EXPECT_EQ(scale_rating(0.0), 1500.0);
  EXPECT_NEAR(scale_rating(std::log(3.0)), 1939.4, 0.05);
  RatingTable t;
  t.entries = {{"a", 0.3, 0, 1, 0, false}, {"b", -1.2, 0, 1, 0, false}, {"c", 0.9, 0, 1, 0, false}};
  const RatingTable s = scale_ratings(t);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_EQ(s.entries[i].raw < s.entries[j].raw, s.entries[i].scaled < s.entries[j].scaled);
}

TEST(LogisticTest, ZeroFeaturesGiveBaseRate) {
  const std::vector<PrefFeature> x(10);
  const std::vector<int> y = {1, 1, 1, 0, 0, 1, 1, 0, 1, 1};
  const LogisticFit fit = logistic_pref_fit(x, y);
  EXPECT_NEAR(fit.coef_mus, 0.0, 1e-9);
  EXPECT_NEAR(fit.coef_ali, 0.0, 1e-9);
  EXPECT_NEAR(fit.intercept, std::log(7.0 / 3.0), 1e-6);
  EXPECT_TRUE(fit.converged);
}

TEST(LogisticTest, RecoversPlantedCoefficients) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PrefFeature> x;
  std::vector<int> y;
  for (int i = 0; i < 5000; ++i) {
    const PrefFeature f{n(rng), n(rng)};
    x.push_back(f);
    y.push_back(u(rng) < 1.0 / (1.0 + std::exp(-(1.2 * f.delta_mus + 0.2 * f.delta_ali))));
  }
  const LogisticFit fit = logistic_pref_fit(x, y);
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.coef_mus, 1.2, 0.15);
  EXPECT_NEAR(fit.coef_ali, 0.2, 0.15);
  EXPECT_NEAR(fit.intercept, 0.0, 0.15);
  const ClassifierScores cv = cross_validate_logistic(x, y, 5, 1);
  EXPECT_GT(cv.auc, 0.8);
  EXPECT_EQ(cv.auc, cross_validate_logistic(x, y, 5, 1).auc);
}

TEST(LogisticTest, SeparableDataIsFlagged) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<PrefFeature> x;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    const PrefFeature f{n(rng), n(rng)};
    x.push_back(f);
    y.push_back(f.delta_mus > 0.0);
  }
  const LogisticFit fit = logistic_pref_fit(x, y);
  EXPECT_TRUE(fit.separable);
  EXPECT_FALSE(fit.converged);
  EXPECT_GT(fit.coef_mus, 0.0);
  EXPECT_LT(std::abs(fit.coef_ali), std::abs(fit.coef_mus));
  EXPECT_EQ(fit.train_accuracy, 1.0);
  EXPECT_EQ(evaluate_logistic(fit, x, y).auc, 1.0);
}

TEST(LogisticTest, Errors) {
  const std::vector<PrefFeature> x(3);
  EXPECT_THROW(logistic_pref_fit(x, std::vector<int>{1, 1, 0}), ContractError);
  EXPECT_THROW(logistic_pref_fit(x, std::vector<int>{1, 0}), ContractError);
  const std::vector<PrefFeature> four(4);
  EXPECT_THROW(logistic_pref_fit(four, std::vector<int>{1, 0, 2, 0}), ContractError);
}

TEST(LogisticTest, AucCountsTiesAsHalf) {
  LogisticFit flat;
  const std::vector<PrefFeature> x(4);
  EXPECT_EQ(evaluate_logistic(flat, x, std::vector<int>{1, 0, 1, 0}).auc, 0.5);
}

}  // namespace
}  // namespace cmirm
