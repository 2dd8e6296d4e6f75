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

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "cmirm/error.hpp"
#include "cmirm/metrics.hpp"

namespace cmirm {

namespace {

void check_rating(double y) {
  if (!(y >= 1.0 && y <= 5.0)) {
    throw ContractError("rating " + std::to_string(y) + " outside [1, 5]");
  }
}

void check_not_tie(Label label) {
  if (label == Label::kTie) throw ContractError("tie labels must be filtered before training");
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

void validate_record(const PreferenceRecord& r) {
  if (r.audio_a == r.audio_b) {
    throw ContractError("pair " + r.pair_id + ": audio_a and audio_b are identical");
  }
  if (r.confidence && (*r.confidence < 1 || *r.confidence > 5)) {
    throw ContractError("pair " + r.pair_id + ": confidence outside 1..5");
  }
}

void validate_record(const RatingRecord& r) { check_rating(r.y); }

TieFilterResult drop_ties(std::span<const PreferenceRecord> records) {
  TieFilterResult out;
  for (const auto& r : records) {
    if (r.label == Label::kTie) {
      ++out.ties_dropped;
    } else {
      out.kept.push_back(r);
    }
  }
  if (out.ties_dropped > 0) {
    spdlog::warn("dropped {} tie-labelled pairs of {}", out.ties_dropped, records.size());
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ContractError("label_smoothing must be in [0, 1)");
  }
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (eval_interval < 1) throw ContractError("eval_interval must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
}

double smoothed_target(Label label, double eps) {
  check_not_tie(label);
  return (1.0 - eps) * (label == Label::kA ? 1.0 : 0.0) + 0.5 * eps;
}

// -[t log s(d) + (1-t) log(1-s(d))] rewritten as softplus(d) - t d; the
// form is stable for any d and swapping (a, b, label) maps d -> -d, t -> 1-t.
double bt_pair_loss(double score_a, double score_b, Label label, double eps) {
  const double t = smoothed_target(label, eps);
  const double d = score_a - score_b;
  if (label == Label::kA) return softplus(d) - t * d;
  return softplus(-d) - (1.0 - t) * (-d);
}

Var bt_pair_loss(Graph& g, Var score_a, Var score_b, Label label, double eps) {
  const double t = smoothed_target(label, eps);
  // Orient so the preferred candidate comes first; keeps the antisymmetry
  // exact in floating point.
  Var d = label == Label::kA ? ops::sub(g, score_a, score_b) : ops::sub(g, score_b, score_a);
  const double target = label == Label::kA ? t : 1.0 - t;
  return ops::sub(g, ops::softplus(g, d), ops::scale(g, d, target));
}

double scalar_reg_loss(double s, double y, double a, double b) {
  check_rating(y);
  const double r = 2.0 * std::tanh(a * s + b) + 3.0 - y;
  return r * r;
}

Var scalar_reg_loss(Graph& g, Var s, double y, Var a, Var b) {
  check_rating(y);
  Var z = ops::add(g, ops::mul(g, a, s), b);
  return ops::square(g, ops::affine(g, ops::tanh(g, z), 2.0, 3.0 - y));
}

BatchLossNodes record_batch_loss(Graph& g, const ModelVars& vars, Var reg_a, Var reg_b,
                                 std::span<const TrainingRecord> batch,
                                 const ModelConfig& config, const EmbeddingSource& source,
                                 double eps) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  std::array<std::vector<Var>, 2> per_head;
  for (const auto& record : batch) {
    if (const auto* p = std::get_if<PreferenceRecord>(&record)) {
      check_not_tie(p->label);
      Var h = encode_prompt(g, vars, config, source.resolve(p->prompt));
      const std::size_t k = head_index(p->dimension);
      Var sa = ops::element(g, score_audio(g, vars, config, h, source.audio(p->audio_a).frames), k);
      Var sb = ops::element(g, score_audio(g, vars, config, h, source.audio(p->audio_b).frames), k);
      per_head[k].push_back(bt_pair_loss(g, sa, sb, p->label, eps));
    } else {
      const auto& r = std::get<RatingRecord>(record);
      check_rating(r.y);
      Var h = encode_prompt(g, vars, config, source.resolve(r.prompt));
      const std::size_t k = head_index(r.dimension);
      Var s = ops::element(g, score_audio(g, vars, config, h, source.audio(r.audio).frames), k);
      per_head[k].push_back(scalar_reg_loss(g, s, r.y, reg_a, reg_b));
    }
  }

  BatchLossNodes out;
  std::vector<Var> head_means;
  for (Dimension d : kDimensions) {
    const auto& losses = per_head[head_index(d)];
    if (losses.empty()) continue;
    Var total = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) total = ops::add(g, total, losses[i]);
    Var mean = ops::scale(g, total, 1.0 / static_cast<double>(losses.size()));
    const double value = g.value(mean)[0];
    if (d == Dimension::kMusicality) {
      out.values.mus = value;
      out.values.mus_count = losses.size();
    } else {
      out.values.ali = value;
      out.values.ali_count = losses.size();
    }
    head_means.push_back(mean);
  }
  Var sum = head_means.size() == 1 ? head_means[0] : ops::add(g, head_means[0], head_means[1]);
  out.total = ops::scale(g, sum, 0.5);
  out.values.total = g.value(out.total)[0];
  return out;
}

BatchLoss batch_loss(std::span<const TrainingRecord> batch, const ModelParams& params,
                     const ModelConfig& config, const EmbeddingSource& source, double eps,
                     RegressionMap reg) {
  Graph g;
  const ModelVars vars = bind_params(g, params, /*trainable=*/false);
  Var a = g.constant(Tensor({1}, reg.a));
  Var b = g.constant(Tensor({1}, reg.b));
  return record_batch_loss(g, vars, a, b, batch, config, source, eps).values;
}

bool EarlyStopper::update(std::size_t step, double metric) {
  improved_ = !have_best_ || metric > best_metric_;
  if (improved_) {
    have_best_ = true;
    best_metric_ = metric;
    best_step_ = step;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return patience_ == 0 || stale_ >= patience_;
}

BatchSchedule::BatchSchedule(std::size_t n_records, std::size_t batch_size, std::uint64_t seed)
    : order_(n_records), batch_size_(batch_size), rng_(seed) {
  if (n_records == 0) throw ContractError("cannot schedule batches over an empty dataset");
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  std::iota(order_.begin(), order_.end(), 0);
  reshuffle();
}

void BatchSchedule::reshuffle() {
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = order_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng_() % i);
    std::swap(order_[i - 1], order_[j]);
  }
  cursor_ = 0;
}

std::vector<std::size_t> BatchSchedule::next() {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == order_.size()) reshuffle();
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

EvalRecord evaluate_records(std::span<const TrainingRecord> records, const ModelParams& params,
                            const ModelConfig& config, const EmbeddingSource& source) {
  struct HeadData {
    std::vector<double> sa, sb, target;
    std::vector<Label> labels;
    std::vector<double> rating_scores, ratings;
  };
  std::array<HeadData, 2> heads;
  Scorer scorer(params, config);
  for (const auto& record : records) {
    if (const auto* p = std::get_if<PreferenceRecord>(&record)) {
      if (p->label == Label::kTie) continue;
      const Tensor* evals[] = {&source.audio(p->audio_a).frames, &source.audio(p->audio_b).frames};
      const auto scores = scorer.score_all(source.resolve(p->prompt), evals);
      auto& h = heads[head_index(p->dimension)];
      const bool mus = p->dimension == Dimension::kMusicality;
      h.sa.push_back(mus ? scores[0].mus : scores[0].ali);
      h.sb.push_back(mus ? scores[1].mus : scores[1].ali);
      h.labels.push_back(p->label);
      h.target.push_back(p->label == Label::kA ? 1.0 : 0.0);
    } else {
      const auto& r = std::get<RatingRecord>(record);
      const auto s = scorer.score(source.resolve(r.prompt), source.audio(r.audio).frames);
      auto& h = heads[head_index(r.dimension)];
      h.rating_scores.push_back(r.dimension == Dimension::kMusicality ? s.mus : s.ali);
      h.ratings.push_back(r.y);
    }
  }

  EvalRecord out;
  double total = 0.0;
  std::size_t available = 0;
  for (Dimension d : kDimensions) {
    auto& h = heads[head_index(d)];
    std::optional<double> accuracy, ce;
    if (!h.labels.empty()) {
      accuracy = pairwise_accuracy(h.sa, h.sb, h.labels);
      std::vector<double> prob(h.sa.size());
      for (std::size_t i = 0; i < prob.size(); ++i) prob[i] = sigmoid(h.sa[i] - h.sb[i]);
      ce = binary_ce(prob, h.target).value;
    } else {
      // Pairs induced by ratings: every pair of records with different y.
      std::size_t pairs = 0, correct = 0;
      for (std::size_t i = 0; i < h.ratings.size(); ++i) {
        for (std::size_t j = i + 1; j < h.ratings.size(); ++j) {
          const double dy = h.ratings[i] - h.ratings[j];
          if (dy == 0.0) continue;
          ++pairs;
          correct += dy * (h.rating_scores[i] - h.rating_scores[j]) > 0.0;
        }
      }
      if (pairs > 0) accuracy = static_cast<double>(correct) / static_cast<double>(pairs);
    }
    if (accuracy) {
      total += *accuracy;
      ++available;
    }
    if (d == Dimension::kMusicality) {
      out.mus_accuracy = accuracy;
      out.mus_ce = ce;
    } else {
      out.ali_accuracy = accuracy;
      out.ali_ce = ce;
    }
  }
  if (available == 0) {
    throw ContractError("validation set has no usable pairs for either head");
  }
  out.criterion = total / static_cast<double>(available);
  return out;
}

namespace {

struct StepOutcome {
  BatchLoss loss;
  std::vector<Tensor> grads;  // model grads in flatten order, then a, b
};

StepOutcome compute_step(const ModelParams& params, const RegressionMap& reg,
                         bool train_regression, std::span<const TrainingRecord> batch,
                         const ModelConfig& config, const EmbeddingSource& source, double eps) {
  Graph g;
  const ModelVars vars = bind_params(g, params, /*trainable=*/true);
  Var a = train_regression ? g.parameter(Tensor({1}, reg.a)) : g.constant(Tensor({1}, reg.a));
  Var b = train_regression ? g.parameter(Tensor({1}, reg.b)) : g.constant(Tensor({1}, reg.b));
  const BatchLossNodes nodes = record_batch_loss(g, vars, a, b, batch, config, source, eps);
  if (!std::isfinite(nodes.values.total)) throw NumericError("training loss is not finite");
  g.backward(nodes.total);
  StepOutcome out{nodes.values, {}};
  for (const Var* v : flatten(vars)) out.grads.push_back(g.grad(*v));
  if (train_regression) {
    out.grads.push_back(g.grad(a));
    out.grads.push_back(g.grad(b));
  }
  return out;
}

std::vector<TrainingRecord> gather(std::span<const TrainingRecord> records,
                                   const std::vector<std::size_t>& idx) {
  std::vector<TrainingRecord> batch;
  batch.reserve(idx.size());
  for (std::size_t i : idx) batch.push_back(records[i]);
  return batch;
}

double epochs(std::size_t steps, std::size_t batch, std::size_t records) {
  return static_cast<double>(steps) * static_cast<double>(batch) / static_cast<double>(records);
}

void check_params(const ModelParams& params, const ModelConfig& config) {
  const auto shapes = parameter_shapes(config);
  const auto tensors = flatten(params);
  if (tensors.size() != shapes.size()) throw ShapeError("initial parameters do not match config");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (tensors[i]->shape() != shapes[i]) throw ShapeError("initial parameters do not match config");
  }
}

}  // namespace

StageResult train_stage1(std::span<const PreferenceRecord> dataset, const ModelParams& init,
                         const ModelConfig& model_config, const TrainConfig& config,
                         const EmbeddingSource& source,
                         std::span<const TrainingRecord> monitor) {
  model_config.validate();
  config.validate();
  check_params(init, model_config);
  std::vector<TrainingRecord> records;
  records.reserve(dataset.size());
  for (const auto& r : dataset) {
    if (r.source != Source::kPseudo) {
      throw ContractError("stage 1 expects pseudo-labelled pairs; " + r.pair_id + " is human");
    }
    check_not_tie(r.label);
    validate_record(r);
    records.emplace_back(r);
  }

  StageResult result{init, {}};
  result.report.stage = "stage1";
  if (config.stage1_steps == 0) return result;
  if (records.empty()) throw ContractError("stage 1 dataset is empty");

  std::vector<Tensor> flat = flat_copy(init);
  AdamState adam{config.adam, 0, {}, {}};
  BatchSchedule schedule(records.size(), config.batch_size, config.seed);
  for (std::size_t step = 1; step <= config.stage1_steps; ++step) {
    const auto batch = gather(records, schedule.next());
    StepOutcome o = compute_step(result.params, {}, false, batch, model_config, source,
                                 config.label_smoothing);
    adam_step(flat, o.grads, adam);
    result.params = unflatten(model_config, flat);
    result.report.steps.push_back({step, o.loss});
    if (!monitor.empty() && (step % config.eval_interval == 0 || step == config.stage1_steps)) {
      EvalRecord e = evaluate_records(monitor, result.params, model_config, source);
      e.step = step;
      result.report.evals.push_back(e);
    }
  }
  for (const Tensor& t : flat) require_finite(t, "stage 1 parameters");
  result.report.selected_step = config.stage1_steps;
  result.report.epochs = epochs(config.stage1_steps, config.batch_size, records.size());
  return result;
}

StageResult train_stage2(std::span<const TrainingRecord> train,
                         std::span<const TrainingRecord> validation, const ModelParams& init,
                         const ModelConfig& model_config, const TrainConfig& config,
                         const EmbeddingSource& source) {
  model_config.validate();
  config.validate();
  check_params(init, model_config);
  if (validation.empty()) throw ContractError("stage 2 requires a non-empty validation set");
  if (train.empty()) throw ContractError("stage 2 training set is empty");
  for (const auto& r : train) {
    std::visit([](const auto& rec) { validate_record(rec); }, r);
    if (const auto* p = std::get_if<PreferenceRecord>(&r)) check_not_tie(p->label);
  }

  StageResult result{init, {}};
  result.report.stage = "stage2";
  RegressionMap reg{config.reg_a_init, config.reg_b_init};
  result.report.regression = reg;

  std::vector<Tensor> flat = flat_copy(init);
  flat.push_back(Tensor({1}, reg.a));
  flat.push_back(Tensor({1}, reg.b));
  const std::size_t n_model = flat.size() - 2;
  AdamState adam{config.adam, 0, {}, {}};
  BatchSchedule schedule(train.size(), config.batch_size, config.seed);
  EarlyStopper stopper(config.patience);
  ModelParams current = init;

  std::size_t step = 0;
  while (step < config.stage2_max_steps) {
    ++step;
    const auto batch = gather(train, schedule.next());
    StepOutcome o = compute_step(current, reg, true, batch, model_config, source,
                                 config.label_smoothing);
    adam_step(flat, o.grads, adam);
    current = unflatten(model_config, std::span<const Tensor>(flat).first(n_model));
    reg = {flat[n_model][0], flat[n_model + 1][0]};
    result.report.steps.push_back({step, o.loss});

    if (step % config.eval_interval == 0 || step == config.stage2_max_steps) {
      EvalRecord e = evaluate_records(validation, current, model_config, source);
      e.step = step;
      result.report.evals.push_back(e);
      const bool stop = stopper.update(step, e.criterion);
      if (stopper.improved()) {
        result.params = current;
        result.report.regression = reg;
      }
      if (stop) break;
    }
  }
  result.report.selected_step = stopper.best_step();
  result.report.epochs = epochs(step, config.batch_size, train.size());
  return result;
}

}  // namespace cmirm
