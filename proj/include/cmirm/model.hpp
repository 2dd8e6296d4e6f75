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

#ifndef CMIRM_MODEL_HPP_
#define CMIRM_MODEL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmirm/autodiff.hpp"
#include "cmirm/embeddings.hpp"
#include "cmirm/tensor.hpp"
#include "cmirm/transformer.hpp"
#include "cmirm/types.hpp"

namespace cmirm {

// Compositional instruction: any subset of text, lyrics and reference audio.
// Text and lyrics hold content (looked up as store ids first, synthesized
// otherwise); ref_audio holds an embedding id.
struct PromptBundle {
  std::optional<std::string> text;
  std::optional<std::string> lyrics;
  std::optional<std::string> ref_audio;

  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

// Prompt modalities as frame tensors. A missing entry is an absent modality.
struct ResolvedPrompt {
  std::optional<Tensor> text;
  std::optional<Tensor> lyrics;
  std::optional<Tensor> ref_audio;
};

// Resolves content references. Audio ids must exist in the store; text and
// lyrics fall back to the synthetic encoder with the store's dim.
class EmbeddingSource {
 public:
  EmbeddingSource(const EmbeddingStore& store, std::uint64_t synth_seed = 0)
      : store_(store), synth_seed_(synth_seed) {}

  const EmbeddingStore& store() const { return store_; }
  std::size_t dim() const { return store_.dim(); }

  // DataError naming the id when missing.
  const EmbeddingSequence& audio(std::string_view id) const;
  Tensor text(std::string_view content, ContentKind kind) const;
  ResolvedPrompt resolve(const PromptBundle& prompt) const;

 private:
  const EmbeddingStore& store_;
  std::uint64_t synth_seed_;
};

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t prompt_layers = 4;
  std::size_t joint_layers = 1;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 64;  // scoring head width
  std::size_t ffn_hidden = 0;   // transformer FFN width; 0 means 4 * dim
  std::uint64_t seed = 0;
  // Test hook: permits joint_layers == 0 (pooling-symmetry control).
  bool allow_empty_joint = false;

  BlockShape block_shape() const;
  // ContractError describing the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum ModalitySlot : std::size_t { kSlotText, kSlotLyrics, kSlotRefAudio, kSlotEvalAudio, kNumSlots };
enum HeadTensor : std::size_t { kHeadW1, kHeadB1, kHeadW2, kHeadB2, kNumHeadTensors };

// Full parameter set as values (T = Tensor) or bound graph nodes (T = Var).
// The output head maps pooled [dim] -> mlp_hidden -> 2 with GELU; column 0
// is the alignment score and column 1 the musicality score.
template <class T>
struct ModelParamsT {
  std::vector<Block<T>> prompt_blocks;
  std::vector<Block<T>> joint_blocks;
  std::array<T, kNumSlots> type_tags;
  std::array<T, kNumHeadTensors> head;
};

using ModelParams = ModelParamsT<Tensor>;
using ModelVars = ModelParamsT<Var>;

// Canonical flat order used by checkpoints, the optimizer and gradient checks.
template <class T>
std::vector<T*> flatten(ModelParamsT<T>& p) {
  std::vector<T*> out;
  for (auto& b : p.prompt_blocks)
    for (auto& t : b.field) out.push_back(&t);
  for (auto& b : p.joint_blocks)
    for (auto& t : b.field) out.push_back(&t);
  for (auto& t : p.type_tags) out.push_back(&t);
  for (auto& t : p.head) out.push_back(&t);
  return out;
}

template <class T>
std::vector<const T*> flatten(const ModelParamsT<T>& p) {
  std::vector<const T*> out;
  for (T* t : flatten(const_cast<ModelParamsT<T>&>(p))) out.push_back(t);
  return out;
}

std::vector<std::string> parameter_names(const ModelConfig& config);
std::vector<Shape> parameter_shapes(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);
std::size_t parameter_count(const ModelParams& params);

// Deterministic in config.seed. Projections ~ N(0, 1/fan_in); block output
// projections are zero so every block starts as the identity.
ModelParams init_params(const ModelConfig& config);

// Copies a flat list back into a parameter structure of the given config.
ModelParams unflatten(const ModelConfig& config, std::span<const Tensor> tensors);
std::vector<Tensor> flat_copy(const ModelParams& params);

// Binds every parameter as a graph leaf; `trainable` selects parameter vs
// constant leaves.
ModelVars bind_params(Graph& g, const ModelParams& params, bool trainable);

struct RewardScores {
  double ali = 0.0;
  double mus = 0.0;

  double mean() const { return 0.5 * (ali + mus); }
  double on(Dimension d) const { return d == Dimension::kAlignment ? ali : mus; }
  friend bool operator==(const RewardScores&, const RewardScores&) = default;
};

// Fixed sinusoidal encodings: row p, column 2i holds sin(p / 10000^(2i/dim))
// and column 2i+1 the matching cosine. Each input segment (every prompt
// modality and the evaluation audio) gets positions 0..n-1.
Tensor sinusoidal_positions(std::size_t rows, std::size_t dim);

// Prompt tower: position-encoded, type-tagged [E_t; E_l; E_ref] through the
// prompt blocks. Absent or all-zero modalities contribute a single zero frame.
Var encode_prompt(Graph& g, const ModelVars& vars, const ModelConfig& config,
                  const ResolvedPrompt& prompt);

// Joint tower over [h_prompt; E_eval], mean-pooled over the evaluation-audio
// positions, then the scoring head. Returns a [2] node (ali, mus).
Var score_audio(Graph& g, const ModelVars& vars, const ModelConfig& config,
                Var prompt_hidden, const Tensor& eval_frames);

// Inference helper that binds the parameters once and reuses them for any
// number of (prompt, audio) evaluations. Not thread-safe; use one per thread.
class Scorer {
 public:
  Scorer(const ModelParams& params, const ModelConfig& config);

  RewardScores score(const ResolvedPrompt& prompt, const Tensor& eval_frames);
  // Scores several candidates against one prompt encoding.
  std::vector<RewardScores> score_all(const ResolvedPrompt& prompt,
                                      std::span<const Tensor* const> eval_frames);

 private:
  ModelConfig config_;
  Graph graph_;
  ModelVars vars_;
  std::size_t bound_size_ = 0;
};

// Inference convenience over a fresh graph.
RewardScores forward(const ResolvedPrompt& prompt, const Tensor& eval_frames,
                     const ModelParams& params, const ModelConfig& config);
RewardScores forward(const PromptBundle& prompt, const EmbeddingSequence& eval_audio,
                     const ModelParams& params, const ModelConfig& config,
                     const EmbeddingSource& source);

// 2 * tanh(a * s + b) + 3, the bounded rating map used only for Stage-2
// regression. Results stay strictly inside (1, 5) even where tanh rounds to
// +-1. NumericError on non-finite input.
double mapped_mos(double s, double a, double b);

// Versioned checkpoint: "CMIRMCKP", u32 version, config, u64 value count,
// little-endian f64 values in flatten() order, u64 FNV-1a checksum of all
// preceding bytes.
void write_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                      const ModelParams& params);
std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& config,
                                            const ModelParams& params);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

// FormatError / CorruptionError on damage; ContractError when `expected` is
// given and the stored config differs.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes,
                             const std::optional<ModelConfig>& expected = std::nullopt);
Checkpoint read_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace cmirm

#endif  // CMIRM_MODEL_HPP_
