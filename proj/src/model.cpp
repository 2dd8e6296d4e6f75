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

#include "cmirm/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "binary_io.hpp"
#include "cmirm/error.hpp"
#include "cmirm/hash.hpp"

namespace cmirm {

const EmbeddingSequence& EmbeddingSource::audio(std::string_view id) const {
  return store_.at(id);
}

Tensor EmbeddingSource::text(std::string_view content, ContentKind kind) const {
  if (const auto* seq = store_.find(content)) return seq->frames;
  return synth_encode(content, kind, store_.dim(), synth_seed_).frames;
}

ResolvedPrompt EmbeddingSource::resolve(const PromptBundle& prompt) const {
  ResolvedPrompt out;
  if (prompt.text) out.text = text(*prompt.text, ContentKind::kText);
  if (prompt.lyrics) out.lyrics = text(*prompt.lyrics, ContentKind::kLyrics);
  if (prompt.ref_audio) out.ref_audio = audio(*prompt.ref_audio).frames;
  return out;
}

BlockShape ModelConfig::block_shape() const {
  return BlockShape{dim, heads, ffn_hidden == 0 ? 4 * dim : ffn_hidden};
}

void ModelConfig::validate() const {
  if (dim == 0) throw ContractError("model dim must be positive");
  if (heads == 0 || dim % heads != 0) {
    throw ContractError("model dim " + std::to_string(dim) +
                        " must be divisible by heads " + std::to_string(heads));
  }
  if (prompt_layers < 1) throw ContractError("prompt_layers must be >= 1");
  if (joint_layers < 1 && !allow_empty_joint) throw ContractError("joint_layers must be >= 1");
  if (mlp_hidden == 0) throw ContractError("mlp_hidden must be positive");
}

namespace {

std::array<Shape, kNumHeadTensors> head_shapes(const ModelConfig& c) {
  return {Shape{c.dim, c.mlp_hidden}, Shape{c.mlp_hidden}, Shape{c.mlp_hidden, 2},
          Shape{2}};
}

constexpr std::array<std::string_view, kNumSlots> kSlotNames = {"text", "lyrics",
                                                                 "ref_audio", "eval_audio"};
constexpr std::array<std::string_view, kNumHeadTensors> kHeadNames = {"w1", "b1", "w2",
                                                                      "b2"};

}  // namespace

std::vector<std::string> parameter_names(const ModelConfig& c) {
  std::vector<std::string> names;
  auto blocks = [&](const char* tower, std::size_t layers) {
    for (std::size_t l = 0; l < layers; ++l)
      for (auto n : kBlockTensorNames)
        names.push_back(std::string(tower) + "." + std::to_string(l) + "." + std::string(n));
  };
  blocks("prompt", c.prompt_layers);
  blocks("joint", c.joint_layers);
  for (auto n : kSlotNames) names.push_back("tag." + std::string(n));
  for (auto n : kHeadNames) names.push_back("head." + std::string(n));
  return names;
}

std::vector<Shape> parameter_shapes(const ModelConfig& c) {
  std::vector<Shape> shapes;
  const auto bs = c.block_shape();
  for (std::size_t l = 0; l < c.prompt_layers + c.joint_layers; ++l)
    for (std::size_t i = 0; i < kNumBlockTensors; ++i)
      shapes.push_back(block_tensor_shape(bs, static_cast<BlockTensor>(i)));
  for (std::size_t i = 0; i < kNumSlots; ++i) shapes.push_back({c.dim});
  for (const auto& s : head_shapes(c)) shapes.push_back(s);
  return shapes;
}

std::size_t parameter_count(const ModelConfig& c) {
  std::size_t n = 0;
  for (const auto& s : parameter_shapes(c)) n += shape_size(s);
  return n;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const Tensor* t : flatten(p)) n += t->size();
  return n;
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const auto bs = config.block_shape();
  ModelParams p;
  for (std::size_t l = 0; l < config.prompt_layers; ++l)
    p.prompt_blocks.push_back(init_block(bs, rng, /*zero_output=*/true));
  for (std::size_t l = 0; l < config.joint_layers; ++l)
    p.joint_blocks.push_back(init_block(bs, rng, /*zero_output=*/true));

  std::normal_distribution<double> normal(0.0, 1.0);
  const double tag_sd = 1.0 / std::sqrt(static_cast<double>(config.dim));
  for (auto& tag : p.type_tags) {
    tag = Tensor({config.dim});
    for (auto& v : tag.data()) v = tag_sd * normal(rng);
  }
  const auto shapes = head_shapes(config);
  for (std::size_t i = 0; i < kNumHeadTensors; ++i) {
    Tensor t(shapes[i], 0.0);
    if (i == kHeadW1 || i == kHeadW2) {
      const double sd = 1.0 / std::sqrt(static_cast<double>(shapes[i][0]));
      for (auto& v : t.data()) v = sd * normal(rng);
    }
    p.head[i] = std::move(t);
  }
  return p;
}

ModelParams unflatten(const ModelConfig& config, std::span<const Tensor> tensors) {
  config.validate();
  const auto shapes = parameter_shapes(config);
  if (tensors.size() != shapes.size()) {
    throw ShapeError("expected " + std::to_string(shapes.size()) + " tensors, got " +
                     std::to_string(tensors.size()));
  }
  ModelParams p;
  p.prompt_blocks.resize(config.prompt_layers);
  p.joint_blocks.resize(config.joint_layers);
  auto slots = flatten(p);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (tensors[i].shape() != shapes[i]) {
      throw ShapeError("tensor " + std::to_string(i) + " has shape " +
                       shape_string(tensors[i].shape()) + ", expected " +
                       shape_string(shapes[i]));
    }
    *slots[i] = tensors[i];
  }
  return p;
}

std::vector<Tensor> flat_copy(const ModelParams& params) {
  std::vector<Tensor> out;
  for (const Tensor* t : flatten(params)) out.push_back(*t);
  return out;
}

ModelVars bind_params(Graph& g, const ModelParams& params, bool trainable) {
  auto leaf = [&](const Tensor& t) { return trainable ? g.parameter(t) : g.constant(t); };
  ModelVars v;
  for (const auto& b : params.prompt_blocks) {
    BlockVars bv;
    for (std::size_t i = 0; i < kNumBlockTensors; ++i) bv.field[i] = leaf(b.field[i]);
    v.prompt_blocks.push_back(bv);
  }
  for (const auto& b : params.joint_blocks) {
    BlockVars bv;
    for (std::size_t i = 0; i < kNumBlockTensors; ++i) bv.field[i] = leaf(b.field[i]);
    v.joint_blocks.push_back(bv);
  }
  for (std::size_t i = 0; i < kNumSlots; ++i) v.type_tags[i] = leaf(params.type_tags[i]);
  for (std::size_t i = 0; i < kNumHeadTensors; ++i) v.head[i] = leaf(params.head[i]);
  return v;
}

Tensor sinusoidal_positions(std::size_t rows, std::size_t dim) {
  Tensor pe({rows, dim});
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) * freq;
      pe.at(p, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

namespace {

// Absent and all-zero modalities collapse to one zero frame so both spellings
// of "no content" produce the same computation.
Tensor modality_frames(const std::optional<Tensor>& frames, std::size_t dim,
                       const char* what) {
  if (!frames || frames->empty()) return Tensor({1, dim}, 0.0);
  if (frames->rank() != 2 || frames->cols() != dim) {
    throw ShapeError(std::string(what) + " embedding " + shape_string(frames->shape()) +
                     " does not match model dim " + std::to_string(dim));
  }
  const auto data = frames->data();
  if (std::all_of(data.begin(), data.end(), [](double v) { return v == 0.0; }))
    return Tensor({1, dim}, 0.0);
  require_finite(*frames, what);
  return *frames;
}

// Frames with their within-segment positions added.
Tensor with_positions(Tensor frames) {
  const Tensor pe = sinusoidal_positions(frames.rows(), frames.cols());
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] += pe[i];
  return frames;
}

void check_vars(const ModelVars& vars, const ModelConfig& config) {
  if (vars.prompt_blocks.size() != config.prompt_layers ||
      vars.joint_blocks.size() != config.joint_layers) {
    throw ShapeError("parameter layer counts do not match the model config");
  }
}

}  // namespace

Var encode_prompt(Graph& g, const ModelVars& vars, const ModelConfig& config,
                  const ResolvedPrompt& prompt) {
  check_vars(vars, config);
  const std::array<std::pair<const std::optional<Tensor>*, const char*>, 3> slots = {
      {{&prompt.text, "text"}, {&prompt.lyrics, "lyrics"}, {&prompt.ref_audio, "ref_audio"}}};
  std::vector<Var> parts;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    Var x = g.constant(
        with_positions(modality_frames(*slots[s].first, config.dim, slots[s].second)));
    parts.push_back(ops::add_bias(g, x, vars.type_tags[s]));
  }
  Var h = ops::concat_rows(g, parts);
  const auto bs = config.block_shape();
  for (const auto& block : vars.prompt_blocks) h = transformer_block_forward(g, h, block, bs);
  return h;
}

Var score_audio(Graph& g, const ModelVars& vars, const ModelConfig& config,
                Var prompt_hidden, const Tensor& eval_frames) {
  check_vars(vars, config);
  if (eval_frames.empty()) throw ContractError("evaluation audio is required");
  if (eval_frames.rank() != 2 || eval_frames.cols() != config.dim) {
    throw ShapeError("evaluation audio " + shape_string(eval_frames.shape()) +
                     " does not match model dim " + std::to_string(config.dim));
  }
  require_finite(eval_frames, "evaluation audio");
  Var e = ops::add_bias(g, g.constant(with_positions(eval_frames)),
                        vars.type_tags[kSlotEvalAudio]);
  Var hidden = e;
  if (!vars.joint_blocks.empty()) {
    const std::size_t prompt_rows = g.value(prompt_hidden).rows();
    const std::array<Var, 2> seq = {prompt_hidden, e};
    Var j = ops::concat_rows(g, seq);
    const auto bs = config.block_shape();
    for (const auto& block : vars.joint_blocks) j = transformer_block_forward(g, j, block, bs);
    hidden = ops::slice_rows(g, j, prompt_rows, eval_frames.rows());
  }
  Var pooled = ops::reshape(g, mean_pool(g, hidden), {1, config.dim});
  Var z = ops::gelu(g, ops::add_bias(g, ops::matmul(g, pooled, vars.head[kHeadW1]),
                                     vars.head[kHeadB1]));
  Var out = ops::add_bias(g, ops::matmul(g, z, vars.head[kHeadW2]), vars.head[kHeadB2]);
  return ops::reshape(g, out, {2});
}

Scorer::Scorer(const ModelParams& params, const ModelConfig& config) : config_(config) {
  config_.validate();
  vars_ = bind_params(graph_, params, /*trainable=*/false);
  bound_size_ = graph_.size();
}

RewardScores Scorer::score(const ResolvedPrompt& prompt, const Tensor& eval_frames) {
  const Tensor* one[] = {&eval_frames};
  return score_all(prompt, one).front();
}

std::vector<RewardScores> Scorer::score_all(const ResolvedPrompt& prompt,
                                            std::span<const Tensor* const> eval_frames) {
  graph_.truncate(bound_size_);
  Var h = encode_prompt(graph_, vars_, config_, prompt);
  std::vector<RewardScores> out;
  out.reserve(eval_frames.size());
  for (const Tensor* frames : eval_frames) {
    const Tensor& s = graph_.value(score_audio(graph_, vars_, config_, h, *frames));
    out.push_back(RewardScores{s[0], s[1]});
  }
  graph_.truncate(bound_size_);
  return out;
}

RewardScores forward(const ResolvedPrompt& prompt, const Tensor& eval_frames,
                     const ModelParams& params, const ModelConfig& config) {
  Scorer scorer(params, config);
  return scorer.score(prompt, eval_frames);
}

RewardScores forward(const PromptBundle& prompt, const EmbeddingSequence& eval_audio,
                     const ModelParams& params, const ModelConfig& config,
                     const EmbeddingSource& source) {
  if (source.dim() != config.dim) {
    throw ShapeError("embedding store dim " + std::to_string(source.dim()) +
                     " differs from model dim " + std::to_string(config.dim));
  }
  return forward(source.resolve(prompt), eval_audio.frames, params, config);
}

double mapped_mos(double s, double a, double b) {
  if (!std::isfinite(s) || !std::isfinite(a) || !std::isfinite(b)) {
    throw NumericError("mapped_mos: non-finite input");
  }
  // tanh rounds to +-1 for large arguments; keep the result strictly inside.
  const double v = 2.0 * std::tanh(a * s + b) + 3.0;
  return std::clamp(v, std::nextafter(1.0, 5.0), std::nextafter(5.0, 1.0));
}

namespace {

constexpr std::string_view kCheckpointMagic{"CMIRMCKP", 8};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& config,
                                            const ModelParams& params) {
  config.validate();
  const auto shapes = parameter_shapes(config);
  const auto flat = flatten(params);
  if (flat.size() != shapes.size()) throw ShapeError("parameters do not match config");
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat[i]->shape() != shapes[i]) throw ShapeError("parameters do not match config");
  }
  detail::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put_uint<std::uint32_t>(kCheckpointVersion);
  for (std::size_t v : {config.dim, config.prompt_layers, config.joint_layers, config.heads,
                        config.mlp_hidden, config.block_shape().ffn_hidden})
    w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(v));
  w.put_uint<std::uint64_t>(config.seed);
  w.put_uint<std::uint8_t>(config.allow_empty_joint ? 1 : 0);
  w.put_uint<std::uint64_t>(parameter_count(config));
  for (const Tensor* t : flat)
    for (double v : t->data()) w.put_f64(v);
  const std::uint64_t checksum = fnv1a64(std::span<const std::uint8_t>(w.bytes()));
  w.put_uint<std::uint64_t>(checksum);
  return std::move(w.bytes());
}

void write_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                      const ModelParams& params) {
  detail::write_file(path, encode_checkpoint(config, params));
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes,
                             const std::optional<ModelConfig>& expected) {
  if (bytes.size() < kCheckpointMagic.size() ||
      !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  if (bytes.size() < kCheckpointMagic.size() + 4 + 8) {
    throw CorruptionError("checkpoint truncated");
  }
  const auto body = bytes.first(bytes.size() - 8);
  detail::ByteReader tail(bytes.last(8));
  if (fnv1a64(body) != tail.get_uint<std::uint64_t>()) {
    throw CorruptionError("checkpoint checksum mismatch");
  }
  detail::ByteReader r(body.subspan(kCheckpointMagic.size()));
  const auto version = r.get_uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.dim = r.get_uint<std::uint32_t>();
  c.prompt_layers = r.get_uint<std::uint32_t>();
  c.joint_layers = r.get_uint<std::uint32_t>();
  c.heads = r.get_uint<std::uint32_t>();
  c.mlp_hidden = r.get_uint<std::uint32_t>();
  c.ffn_hidden = r.get_uint<std::uint32_t>();
  c.seed = r.get_uint<std::uint64_t>();
  c.allow_empty_joint = r.get_uint<std::uint8_t>() != 0;
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw CorruptionError(std::string("checkpoint config invalid: ") + e.what());
  }
  if (c.ffn_hidden == 4 * c.dim) c.ffn_hidden = 0;
  if (expected) {
    ModelConfig want = *expected;
    if (want.ffn_hidden == 4 * want.dim) want.ffn_hidden = 0;
    want.seed = c.seed;
    if (!(want == c)) throw ContractError("checkpoint config is incompatible with the requested model");
  }
  const auto count = r.get_uint<std::uint64_t>();
  if (count != parameter_count(c)) {
    throw CorruptionError("checkpoint holds " + std::to_string(count) +
                          " values, config needs " + std::to_string(parameter_count(c)));
  }
  if (r.remaining() != count * 8) throw CorruptionError("checkpoint payload size mismatch");
  std::vector<Tensor> tensors;
  for (const auto& s : parameter_shapes(c)) {
    Tensor t(s);
    for (auto& v : t.data()) v = r.get_f64();
    if (!t.all_finite()) throw CorruptionError("checkpoint contains non-finite values");
    tensors.push_back(std::move(t));
  }
  ck.params = unflatten(c, tensors);
  return ck;
}

Checkpoint read_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected) {
  return decode_checkpoint(detail::read_file(path), expected);
}

}  // namespace cmirm
