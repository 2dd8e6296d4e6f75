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

#ifndef CMIRM_TRANSFORMER_HPP_
#define CMIRM_TRANSFORMER_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "cmirm/autodiff.hpp"
#include "cmirm/tensor.hpp"

namespace cmirm {

// Tensors of one pre-normalization transformer block:
//   h  = x + Attn(LN1(x))
//   y  = h + W2 * GELU(W1 * LN2(h) + b1) + b2
// Projection matrices are stored [in, out] so that rows act on the right.
enum BlockTensor : std::size_t {
  kLn1Gain,
  kLn1Bias,
  kWq,
  kBq,
  kWk,
  kBk,
  kWv,
  kBv,
  kWo,
  kBo,
  kLn2Gain,
  kLn2Bias,
  kW1,
  kB1,
  kW2,
  kB2,
  kNumBlockTensors,
};

inline constexpr std::array<std::string_view, kNumBlockTensors> kBlockTensorNames = {
    "ln1_gain", "ln1_bias", "wq", "bq", "wk", "bk", "wv", "bv",
    "wo",       "bo",       "ln2_gain", "ln2_bias", "w1", "b1", "w2", "b2"};

// Block parameters either as values (T = Tensor) or bound graph nodes
// (T = Var).
template <class T>
struct Block {
  std::array<T, kNumBlockTensors> field;
  T& operator[](BlockTensor i) { return field[i]; }
  const T& operator[](BlockTensor i) const { return field[i]; }
};

using BlockParams = Block<Tensor>;
using BlockVars = Block<Var>;

struct BlockShape {
  std::size_t dim = 0;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 0;  // 4 * dim when built through the model config
};

Shape block_tensor_shape(const BlockShape& shape, BlockTensor which);
std::size_t block_parameter_count(const BlockShape& shape);

// Projections drawn from N(0, 1/fan_in); LN gains 1; biases 0. When
// `zero_output` is set the attention output projection and second FFN layer
// (weights and biases) are zero, which makes the block the identity map.
BlockParams init_block(const BlockShape& shape, std::mt19937_64& rng,
                       bool zero_output);

BlockVars bind_block(Graph& g, const BlockParams& params);

// Validates `params` against `shape` and throws ShapeError on any mismatch.
void check_block(const BlockShape& shape, const BlockParams& params);

// Records one block application on `g`. `x` must be [seq, dim] with finite
// values (NumericError otherwise). When `attention` is non-null the per-head
// attention weight nodes ([seq, seq] each) are appended to it.
Var transformer_block_forward(Graph& g, Var x, const BlockVars& params,
                              const BlockShape& shape,
                              std::vector<Var>* attention = nullptr);

}  // namespace cmirm

#endif  // CMIRM_TRANSFORMER_HPP_
