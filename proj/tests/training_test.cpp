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

#include "cmirm/training.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "cmirm/error.hpp"
#include "support.hpp"

namespace cmirm {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(LossTest, SmoothedTargets) {
  EXPECT_EQ(smoothed_target(Label::kA, 0.2), 0.9);
  EXPECT_EQ(smoothed_target(Label::kB, 0.2), 0.1);
  EXPECT_EQ(smoothed_target(Label::kA, 0.0), 1.0);
  EXPECT_EQ(smoothed_target(Label::kB, 0.0), 0.0);
  EXPECT_THROW(smoothed_target(Label::kTie, 0.2), ContractError);
}

TEST(LossTest, ZeroDifferenceIsLn2) {
  for (double eps : {0.0, 0.1, 0.2, 0.5})
    for (Label l : {Label::kA, Label::kB})
      EXPECT_NEAR(bt_pair_loss(1.3, 1.3, l, eps), std::log(2.0), 1e-15);
}

TEST(LossTest, MinimizerMatchesSmoothedTarget) {
  auto f = [](double d) { return bt_pair_loss(d, 0.0, Label::kA, 0.2); };
  double lo = -10.0, hi = 10.0;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 200; ++i) {
    const double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
    if (f(m1) < f(m2)) hi = m2; else lo = m1;
  }
  const double best = 0.5 * (lo + hi);
  EXPECT_NEAR(best, std::log(9.0), 1e-6);
  EXPECT_NEAR(sigmoid(best), 0.9, 1e-6);
}

TEST(LossTest, LabelSwapAntisymmetry) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = n(rng), b = n(rng);
    EXPECT_NEAR(bt_pair_loss(a, b, Label::kA, 0.2), bt_pair_loss(b, a, Label::kB, 0.2), 1e-12);
  }
}

TEST(LossTest, SmoothingBoundsLossFromBelow) {
  const double floor = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
  for (double d = -30.0; d <= 30.0; d += 0.01)
    EXPECT_GE(bt_pair_loss(d, 0.0, Label::kA, 0.2), floor - 1e-12);
  EXPECT_GT(bt_pair_loss(50.0, 0.0, Label::kA, 0.2), 4.0);
}

TEST(LossTest, RejectsTies) {
  EXPECT_THROW(bt_pair_loss(0.0, 1.0, Label::kTie, 0.2), ContractError);
  Graph g;
  EXPECT_THROW(bt_pair_loss(g, g.constant(Tensor::scalar(0.0)), g.constant(Tensor::scalar(1.0)),
                            Label::kTie, 0.2),
               ContractError);
}

TEST(LossTest, RegressionExamples) {
  EXPECT_EQ(scalar_reg_loss(0.0, 3.0, 0.2, 0.0), 0.0);
  EXPECT_EQ(scalar_reg_loss(0.0, 5.0, 0.2, 0.0), 4.0);
  EXPECT_NEAR(scalar_reg_loss(5.0, 4.0, 0.2, 0.0), 0.2737, 1e-4);
  EXPECT_THROW(scalar_reg_loss(0.0, 5.5, 0.2, 0.0), ContractError);
  EXPECT_THROW(scalar_reg_loss(0.0, 0.9, 0.2, 0.0), ContractError);
}

TEST(LossTest, GraphLossesMatchValuesAndAnalyticGradients) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> y_dist(1.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const double a = n(rng), b = n(rng);
    const Label label = i % 2 == 0 ? Label::kA : Label::kB;
    Graph g;
    Var va = g.parameter(Tensor::scalar(a));
    Var vb = g.parameter(Tensor::scalar(b));
    Var loss = bt_pair_loss(g, va, vb, label, 0.2);
    EXPECT_NEAR(g.value(loss).item(), bt_pair_loss(a, b, label, 0.2), 1e-12);
    g.backward(loss);
    const double dl = sigmoid(a - b) - smoothed_target(label, 0.2);
    EXPECT_NEAR(g.grad(va).item(), dl, 1e-12);
    EXPECT_NEAR(g.grad(vb).item(), -dl, 1e-12);

    const double s = n(rng), y = y_dist(rng), ra = 0.1 + std::abs(n(rng)) / 4, rb = n(rng) / 4;
    Graph h;
    Var vs = h.parameter(Tensor::scalar(s));
    Var vra = h.parameter(Tensor::scalar(ra));
    Var vrb = h.parameter(Tensor::scalar(rb));
    Var reg = scalar_reg_loss(h, vs, y, vra, vrb);
    EXPECT_NEAR(h.value(reg).item(), scalar_reg_loss(s, y, ra, rb), 1e-12);
    h.backward(reg);
    const double th = std::tanh(ra * s + rb);
    const double outer = 2.0 * (2.0 * th + 3.0 - y) * 2.0 * (1.0 - th * th);
    EXPECT_NEAR(h.grad(vs).item(), outer * ra, 1e-10);
    EXPECT_NEAR(h.grad(vra).item(), outer * s, 1e-10);
    EXPECT_NEAR(h.grad(vrb).item(), outer, 1e-10);
  }
}

// Store with two clips that share identical frames, so any model scores
// them equally.
struct BatchFixture {
  testing::PlantedWorld world = testing::make_planted_world(6, 0, 8, 3);
  ModelConfig config = testing::small_model(4, 8);
  ModelParams params;

  BatchFixture() {
    world.store.add(EmbeddingSequence{"twin", world.store.at("train_0").frames, 1.0});
    ModelParams p = init_params(config);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 0.1);
    for (Tensor* t : flatten(p))
      for (auto& v : t->data()) v += n(rng);
    params = std::move(p);
  }

  PreferenceRecord pair(std::string a, std::string b, Label l, Dimension d) const {
    PreferenceRecord r;
    r.pair_id = a + "|" + b;
    r.prompt.text = "prompt";
    r.audio_a = std::move(a);
    r.audio_b = std::move(b);
    r.label = l;
    r.dimension = d;
    return r;
  }
};

TEST(BatchLossTest, SingleHeadBatchHalvesTheTotal) {
  BatchFixture f;
  const EmbeddingSource source(f.world.store);
  const std::vector<TrainingRecord> batch = {
      f.pair("train_1", "train_2", Label::kA, Dimension::kMusicality),
      f.pair("train_3", "train_4", Label::kB, Dimension::kMusicality)};
  const BatchLoss l = batch_loss(batch, f.params, f.config, source, 0.2);
  EXPECT_TRUE(l.mus_present());
  EXPECT_FALSE(l.ali_present());
  EXPECT_EQ(l.ali, 0.0);
  EXPECT_NEAR(l.total, l.mus / 2.0, 1e-15);
}

TEST(BatchLossTest, EqualScoresGiveLn2) {
  BatchFixture f;
  const EmbeddingSource source(f.world.store);
  const std::vector<TrainingRecord> batch = {
      f.pair("train_0", "twin", Label::kA, Dimension::kMusicality),
      f.pair("twin", "train_0", Label::kB, Dimension::kAlignment)};
  EXPECT_NEAR(batch_loss(batch, f.params, f.config, source, 0.0).total, std::log(2.0), 1e-12);
}

TEST(BatchLossTest, MixedBatchMatchesPerRecordSums) {
  BatchFixture f;
  const EmbeddingSource source(f.world.store);
  const RegressionMap reg{0.3, -0.1};
  RatingRecord r1{PromptBundle{"prompt", std::nullopt, std::nullopt}, "train_5", 4.2,
                  Dimension::kMusicality};
  RatingRecord r2{PromptBundle{"prompt", "la la", std::nullopt}, "train_2", 1.5,
                  Dimension::kAlignment};
  const std::vector<TrainingRecord> batch = {
      f.pair("train_1", "train_2", Label::kA, Dimension::kMusicality), r1,
      f.pair("train_3", "train_4", Label::kB, Dimension::kAlignment), r2};
  auto score = [&](const PromptBundle& p, const std::string& id) {
    return forward(p, f.world.store.at(id), f.params, f.config, source);
  };
  const auto& p1 = std::get<PreferenceRecord>(batch[0]);
  const auto& p3 = std::get<PreferenceRecord>(batch[2]);
  const double mus =
      0.5 * (bt_pair_loss(score(p1.prompt, p1.audio_a).mus, score(p1.prompt, p1.audio_b).mus,
                          Label::kA, 0.2) +
             scalar_reg_loss(score(r1.prompt, r1.audio).mus, r1.y, reg.a, reg.b));
  const double ali =
      0.5 * (bt_pair_loss(score(p3.prompt, p3.audio_a).ali, score(p3.prompt, p3.audio_b).ali,
                          Label::kB, 0.2) +
             scalar_reg_loss(score(r2.prompt, r2.audio).ali, r2.y, reg.a, reg.b));
  const BatchLoss l = batch_loss(batch, f.params, f.config, source, 0.2, reg);
  EXPECT_NEAR(l.mus, mus, 1e-12);
  EXPECT_NEAR(l.ali, ali, 1e-12);
  EXPECT_NEAR(l.total, 0.5 * (mus + ali), 1e-12);
  EXPECT_EQ(l.mus_count, 2u);
  EXPECT_EQ(l.ali_count, 2u);
}

TEST(BatchLossTest, Errors) {
  BatchFixture f;
  const EmbeddingSource source(f.world.store);
  EXPECT_THROW(batch_loss({}, f.params, f.config, source, 0.2), ContractError);
  const std::vector<TrainingRecord> tie = {
      f.pair("train_1", "train_2", Label::kTie, Dimension::kMusicality)};
  EXPECT_THROW(batch_loss(tie, f.params, f.config, source, 0.2), ContractError);
  const std::vector<TrainingRecord> missing = {
      f.pair("train_1", "nowhere_clip", Label::kA, Dimension::kMusicality)};
  try {
    batch_loss(missing, f.params, f.config, source, 0.2);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("nowhere_clip"), std::string::npos);
  }
}

TEST(RecordTest, Validation) {
  PreferenceRecord p;
  p.pair_id = "x";
  p.audio_a = "a";
  p.audio_b = "a";
  EXPECT_THROW(validate_record(p), ContractError);
  p.audio_b = "b";
  EXPECT_NO_THROW(validate_record(p));
  p.confidence = 6;
  EXPECT_THROW(validate_record(p), ContractError);
  RatingRecord r;
  r.audio = "a";
  r.y = 5.0;
  EXPECT_NO_THROW(validate_record(r));
  r.y = 5.01;
  EXPECT_THROW(validate_record(r), ContractError);
}

TEST(RecordTest, DropTies) {
  std::vector<PreferenceRecord> records(5);
  records[1].label = Label::kTie;
  records[3].label = Label::kTie;
  records[4].label = Label::kB;
  const auto result = drop_ties(records);
  EXPECT_EQ(result.ties_dropped, 2u);
  ASSERT_EQ(result.kept.size(), 3u);
  EXPECT_EQ(result.kept[2].label, Label::kB);
}

TEST(EarlyStopperTest, SelectsThePeak) {
  EarlyStopper stopper(2);
  const std::vector<double> metric = {0.50, 0.60, 0.72, 0.70, 0.72, 0.65};
  std::size_t stopped_at = 0;
  for (std::size_t i = 0; i < metric.size(); ++i) {
    if (stopper.update((i + 1) * 25, metric[i])) {
      stopped_at = i;
      break;
    }
  }
  EXPECT_EQ(stopper.best_step(), 75u);
  EXPECT_EQ(stopper.best_metric(), 0.72);
  EXPECT_EQ(stopped_at, 4u);  // equal values are not improvements
}

TEST(EarlyStopperTest, PatienceZeroStopsAtFirstEvaluation) {
  EarlyStopper stopper(0);
  EXPECT_TRUE(stopper.update(25, 0.3));
  EXPECT_TRUE(stopper.improved());
  EXPECT_EQ(stopper.best_step(), 25u);
}

TEST(BatchScheduleTest, EpochsArePermutationsAndDeterministic) {
  BatchSchedule a(10, 4, 77), b(10, 4, 77), c(10, 4, 78);
  std::vector<std::size_t> seen_a, seen_c;
  for (int i = 0; i < 15; ++i) {
    const auto ba = a.next();
    EXPECT_EQ(ba, b.next());
    EXPECT_EQ(ba.size(), 4u);
    seen_a.insert(seen_a.end(), ba.begin(), ba.end());
    const auto bc = c.next();
    seen_c.insert(seen_c.end(), bc.begin(), bc.end());
  }
  for (std::size_t e = 0; e + 10 <= seen_a.size(); e += 10) {
    std::set<std::size_t> epoch(seen_a.begin() + e, seen_a.begin() + e + 10);
    EXPECT_EQ(epoch.size(), 10u);
  }
  EXPECT_NE(seen_a, seen_c);
  EXPECT_NE(std::vector<std::size_t>(seen_a.begin(), seen_a.begin() + 10),
            std::vector<std::size_t>(seen_a.begin() + 10, seen_a.begin() + 20));
}

TrainConfig fast_config(std::size_t steps) {
  TrainConfig c;
  c.stage1_steps = steps;
  c.stage2_max_steps = steps;
  c.batch_size = 16;
  c.adam.learning_rate = 1e-3;
  c.eval_interval = 50;
  c.seed = 3;
  return c;
}

TEST(Stage1Test, ZeroStepsLeavesParamsUnchanged) {
  const auto world = testing::make_planted_world(20, 0, 8, 4);
  const auto pairs = testing::planted_pairs(world, 30, 5);
  const ModelConfig mc = testing::small_model(2, 8);
  const ModelParams init = init_params(mc);
  const auto result = train_stage1(pairs, init, mc, fast_config(0), EmbeddingSource(world.store));
  EXPECT_EQ(flat_copy(result.params), flat_copy(init));
  EXPECT_TRUE(result.report.steps.empty());
}

TEST(Stage1Test, DeterministicAndMonitored) {
  const auto world = testing::make_planted_world(30, 0, 8, 4);
  const auto pairs = testing::planted_pairs(world, 60, 5);
  const auto monitor = testing::as_records(testing::planted_pairs(world, 20, 6));
  const ModelConfig mc = testing::small_model(2, 8);
  const EmbeddingSource source(world.store);
  TrainConfig tc = fast_config(30);
  tc.eval_interval = 10;
  const auto a = train_stage1(pairs, init_params(mc), mc, tc, source, monitor);
  const auto b = train_stage1(pairs, init_params(mc), mc, tc, source, monitor);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(flat_copy(a.params), flat_copy(b.params));
  EXPECT_EQ(a.report.steps.size(), 30u);
  EXPECT_EQ(a.report.evals.size(), 3u);
  EXPECT_EQ(a.report.selected_step, 30u);
  EXPECT_NEAR(a.report.epochs, 30.0 * 16.0 / 60.0, 1e-12);
  EXPECT_NE(flat_copy(a.params), flat_copy(init_params(mc)));
}

TEST(Stage1Test, RejectsHumanTieAndUnknownRecords) {
  const auto world = testing::make_planted_world(20, 0, 8, 4);
  const ModelConfig mc = testing::small_model(2, 8);
  const EmbeddingSource source(world.store);
  auto pairs = testing::planted_pairs(world, 10, 5);
  pairs[3].source = Source::kHuman;
  EXPECT_THROW(train_stage1(pairs, init_params(mc), mc, fast_config(5), source), ContractError);
  pairs[3].source = Source::kPseudo;
  pairs[4].label = Label::kTie;
  EXPECT_THROW(train_stage1(pairs, init_params(mc), mc, fast_config(5), source), ContractError);
  pairs[4].label = Label::kA;
  pairs[5].audio_b = "ghost_clip";
  EXPECT_THROW(train_stage1(pairs, init_params(mc), mc, fast_config(5), source), DataError);
}

TEST(Stage1Test, RecoversPlantedLatent) {
  const auto world = testing::make_planted_world(400, 200, 16, 7);
  const auto pairs = testing::planted_pairs(world, 2000, 8);
  ModelConfig mc = testing::small_model(1, 16);
  mc.heads = 4;
  const EmbeddingSource source(world.store);
  const auto result = train_stage1(pairs, init_params(mc), mc, fast_config(200), source);
  const auto eval = evaluate_records(testing::as_records(pairs), result.params, mc, source);
  ASSERT_TRUE(eval.mus_accuracy.has_value());
  EXPECT_GE(*eval.mus_accuracy, 0.95);
  EXPECT_GE(testing::heldout_srcc(world, result.params, mc), 0.9);
}

TEST(Stage1Test, SmoothingKeepsWinProbabilityNearTarget) {
  // Two quality levels: every pair compares a good clip with a bad one.
  const std::size_t dim = 8;
  EmbeddingStore store(dim);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 0.1);
  for (int i = 0; i < 40; ++i) {
    Tensor t({3, dim});
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t d = 0; d < dim; ++d) t.at(f, d) = n(rng) + (i % 2 == 0 ? 0.5 : -0.5);
    store.add(EmbeddingSequence{"clip_" + std::to_string(i), std::move(t), 1.0});
  }
  std::vector<PreferenceRecord> pairs;
  for (int i = 0; i < 40; i += 2) {
    for (int j = 1; j < 40; j += 8) {
      PreferenceRecord r;
      r.pair_id = std::to_string(i) + "_" + std::to_string(j);
      r.prompt.text = "steady beat";
      const bool good_first = (i + j) % 4 == 1;
      r.audio_a = "clip_" + std::to_string(good_first ? i : j);
      r.audio_b = "clip_" + std::to_string(good_first ? j : i);
      r.label = good_first ? Label::kA : Label::kB;
      r.source = Source::kPseudo;
      pairs.push_back(std::move(r));
    }
  }
  const ModelConfig mc = testing::small_model(3, dim);
  const EmbeddingSource source(store);
  const auto result = train_stage1(pairs, init_params(mc), mc, fast_config(400), source);
  Scorer scorer(result.params, mc);
  double mean = 0.0;
  for (const auto& p : pairs) {
    const auto prompt = source.resolve(p.prompt);
    double d = scorer.score(prompt, store.at(p.audio_a).frames).mus -
               scorer.score(prompt, store.at(p.audio_b).frames).mus;
    if (p.label == Label::kB) d = -d;
    mean += sigmoid(d);
  }
  mean /= static_cast<double>(pairs.size());
  EXPECT_GE(mean, 0.85);
  EXPECT_LE(mean, 0.95);
}

TEST(Stage2Test, FineTunesOnPlantedRatings) {
  const auto world = testing::make_planted_world(300, 200, 16, 12);
  const std::vector<std::string> train_clips(world.train_clips.begin(),
                                             world.train_clips.begin() + 240);
  const std::vector<std::string> val_clips(world.train_clips.begin() + 240,
                                           world.train_clips.end());
  const auto train = testing::planted_ratings(world, train_clips, true);
  const auto val = testing::planted_ratings(world, val_clips, true);
  ModelConfig mc = testing::small_model(5, 16);
  const EmbeddingSource source(world.store);
  TrainConfig tc = fast_config(300);
  tc.eval_interval = 25;
  tc.patience = 3;
  const auto result = train_stage2(train, val, init_params(mc), mc, tc, source);
  const auto& evals = result.report.evals;
  ASSERT_FALSE(evals.empty());
  double best = -1.0;
  std::size_t best_step = 0;
  for (const auto& e : evals)
    if (e.criterion > best) {
      best = e.criterion;
      best_step = e.step;
    }
  EXPECT_EQ(result.report.selected_step, best_step);
  EXPECT_GE(testing::heldout_srcc(world, result.params, mc, Dimension::kMusicality), 0.9);
  EXPECT_GE(testing::heldout_srcc(world, result.params, mc, Dimension::kAlignment), 0.9);
  const auto rerun = train_stage2(train, val, init_params(mc), mc, tc, source);
  EXPECT_EQ(rerun.report, result.report);
}

TEST(Stage2Test, RequiresValidationAndTrainingData) {
  const auto world = testing::make_planted_world(20, 0, 8, 4);
  const auto train = testing::as_records(testing::planted_pairs(world, 10, 5));
  const ModelConfig mc = testing::small_model(2, 8);
  const EmbeddingSource source(world.store);
  EXPECT_THROW(train_stage2(train, {}, init_params(mc), mc, fast_config(10), source),
               ContractError);
  EXPECT_THROW(train_stage2({}, train, init_params(mc), mc, fast_config(10), source),
               ContractError);
}

TEST(Stage2Test, PatienceZeroSelectsFirstEvaluation) {
  const auto world = testing::make_planted_world(40, 0, 8, 4);
  const auto train = testing::as_records(testing::planted_pairs(world, 40, 5));
  const auto val = testing::as_records(testing::planted_pairs(world, 20, 6));
  const ModelConfig mc = testing::small_model(2, 8);
  TrainConfig tc = fast_config(100);
  tc.eval_interval = 10;
  tc.patience = 0;
  const auto result =
      train_stage2(train, val, init_params(mc), mc, tc, EmbeddingSource(world.store));
  EXPECT_EQ(result.report.selected_step, 10u);
  EXPECT_EQ(result.report.evals.size(), 1u);
  EXPECT_EQ(result.report.steps.size(), 10u);
}

}  // namespace
}  // namespace cmirm
