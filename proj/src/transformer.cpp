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

#include "cmirm/transformer.hpp"

#include <cmath>
#include <string>

#include "cmirm/error.hpp"

namespace cmirm {

Shape block_tensor_shape(const BlockShape& s, BlockTensor which) {
  switch (which) {
    case kWq:
    case kWk:
    case kWv:
    case kWo:
      return {s.dim, s.dim};
    case kW1:
      return {s.dim, s.ffn_hidden};
    case kW2:
      return {s.ffn_hidden, s.dim};
    case kB1:
      return {s.ffn_hidden};
    default:
      return {s.dim};
  }
}

std::size_t block_parameter_count(const BlockShape& s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kNumBlockTensors; ++i)
    n += shape_size(block_tensor_shape(s, static_cast<BlockTensor>(i)));
  return n;
}

BlockParams init_block(const BlockShape& s, std::mt19937_64& rng, bool zero_output) {
  BlockParams p;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < kNumBlockTensors; ++i) {
    const auto which = static_cast<BlockTensor>(i);
    Tensor t(block_tensor_shape(s, which), 0.0);
    switch (which) {
      case kLn1Gain:
      case kLn2Gain:
        t.fill(1.0);
        break;
      case kWq:
      case kWk:
      case kWv:
      case kWo:
      case kW1:
      case kW2: {
        if (zero_output && (which == kWo || which == kW2)) break;
        const double sd = 1.0 / std::sqrt(static_cast<double>(t.shape()[0]));
        for (auto& v : t.data()) v = sd * normal(rng);
        break;
      }
      default:
        break;
    }
    p[which] = std::move(t);
  }
  return p;
}

BlockVars bind_block(Graph& g, const BlockParams& params) {
  BlockVars v;
  for (std::size_t i = 0; i < kNumBlockTensors; ++i)
    v.field[i] = g.parameter(params.field[i]);
  return v;
}

void check_block(const BlockShape& s, const BlockParams& params) {
  for (std::size_t i = 0; i < kNumBlockTensors; ++i) {
    const auto which = static_cast<BlockTensor>(i);
    const auto expected = block_tensor_shape(s, which);
    if (params[which].shape() != expected) {
      throw ShapeError("block tensor " + std::string(kBlockTensorNames[i]) +
                       " has shape " + shape_string(params[which].shape()) +
                       ", expected " + shape_string(expected));
    }
  }
}

Var transformer_block_forward(Graph& g, Var x, const BlockVars& p,
                              const BlockShape& s, std::vector<Var>* attention) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2 || xv.cols() != s.dim) {
    throw ShapeError("block input " + shape_string(xv.shape()) +
                     " does not match dim " + std::to_string(s.dim));
  }
  if (s.heads == 0 || s.dim % s.heads != 0) {
    throw ContractError("dim " + std::to_string(s.dim) +
                        " not divisible by heads " + std::to_string(s.heads));
  }
  require_finite(xv, "transformer block input");
  for (std::size_t i = 0; i < kNumBlockTensors; ++i) {
    const auto which = static_cast<BlockTensor>(i);
    if (g.value(p[which]).shape() != block_tensor_shape(s, which)) {
      throw ShapeError("block tensor " + std::string(kBlockTensorNames[i]) +
                       " has shape " + shape_string(g.value(p[which]).shape()));
    }
  }

  using namespace ops;
  const std::size_t head_dim = s.dim / s.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var h = layer_norm(g, x, p[kLn1Gain], p[kLn1Bias]);
  Var q = add_bias(g, matmul(g, h, p[kWq]), p[kBq]);
  Var k = add_bias(g, matmul(g, h, p[kWk]), p[kBk]);
  Var v = add_bias(g, matmul(g, h, p[kWv]), p[kBv]);
  std::vector<Var> heads;
  heads.reserve(s.heads);
  for (std::size_t hd = 0; hd < s.heads; ++hd) {
    const std::size_t off = hd * head_dim;
    Var qh = slice_cols(g, q, off, head_dim);
    Var kh = slice_cols(g, k, off, head_dim);
    Var vh = slice_cols(g, v, off, head_dim);
    Var scores = scale(g, matmul(g, qh, transpose(g, kh)), inv_sqrt);
    Var weights = softmax_rows(g, scores);
    if (attention) attention->push_back(weights);
    heads.push_back(matmul(g, weights, vh));
  }
  Var mixed = heads.size() == 1 ? heads[0] : concat_cols(g, heads);
  Var attn = add_bias(g, matmul(g, mixed, p[kWo]), p[kBo]);
  Var x1 = add(g, x, attn);

  Var h2 = layer_norm(g, x1, p[kLn2Gain], p[kLn2Bias]);
  Var f = gelu(g, add_bias(g, matmul(g, h2, p[kW1]), p[kB1]));
  Var ffn = add_bias(g, matmul(g, f, p[kW2]), p[kB2]);
  return add(g, x1, ffn);
}

}  // namespace cmirm
