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
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cmirm/error.hpp"
#include "cmirm/gradcheck.hpp"
#include "reference.hpp"

namespace cmirm {
namespace {

using testing::Matrix;
using testing::reference_block;
using testing::to_matrix;

Tensor random_input(std::size_t seq, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({seq, dim});
  for (auto& v : t.data()) v = n(rng);
  return t;
}

TEST(TransformerBlockTest, MatchesStraightLineReference) {
  std::mt19937_64 rng(21);
  for (std::size_t heads : {1u, 2u, 4u}) {
    const BlockShape shape{8, heads, 32};
    const BlockParams params = init_block(shape, rng, /*zero_output=*/false);
    const Tensor x = random_input(5, 8, rng);
    Graph g;
    const Tensor& y = g.value(transformer_block_forward(g, g.constant(x), bind_block(g, params), shape));
    const Matrix ref = reference_block(to_matrix(x), params, shape);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at(r, c), ref[r][c], 1e-12);
  }
}

TEST(TransformerBlockTest, ZeroOutputInitIsIdentity) {
  std::mt19937_64 rng(22);
  const BlockShape shape{8, 2, 32};
  const BlockParams params = init_block(shape, rng, /*zero_output=*/true);
  const Tensor x = random_input(3, 8, rng);
  Graph g;
  EXPECT_EQ(g.value(transformer_block_forward(g, g.constant(x), bind_block(g, params), shape)), x);
}

TEST(TransformerBlockTest, AttentionRowsAreDistributions) {
  std::mt19937_64 rng(23);
  const BlockShape shape{8, 4, 32};
  const BlockParams params = init_block(shape, rng, false);
  Graph g;
  std::vector<Var> attention;
  transformer_block_forward(g, g.constant(random_input(6, 8, rng)), bind_block(g, params), shape,
                            &attention);
  ASSERT_EQ(attention.size(), 4u);
  for (Var a : attention) {
    const Tensor& w = g.value(a);
    ASSERT_EQ(w.shape(), (Shape{6, 6}));
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (double v : w.row(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(TransformerBlockTest, RejectsBadInput) {
  std::mt19937_64 rng(24);
  const BlockShape shape{8, 2, 32};
  const BlockParams params = init_block(shape, rng, false);
  Graph g;
  const BlockVars vars = bind_block(g, params);
  EXPECT_THROW(transformer_block_forward(g, g.constant(Tensor({3, 6}, 0.0)), vars, shape),
               ShapeError);
  Tensor bad({2, 8}, 0.0);
  bad.at(1, 3) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(transformer_block_forward(g, g.constant(bad), vars, shape), NumericError);
  EXPECT_THROW(transformer_block_forward(g, g.constant(Tensor({2, 8}, 0.0)), vars,
                                         BlockShape{8, 3, 32}),
               ContractError);
}

TEST(TransformerBlockTest, ParameterCount) {
  const BlockShape shape{8, 2, 32};
  // 2 LNs (2*8 each) + 4 attention projections (64 + 8) + FFN (256 + 32 + 256 + 8).
  EXPECT_EQ(block_parameter_count(shape), 32u + 4u * 72u + 552u);
}

TEST(TransformerBlockTest, CheckBlockRejectsWrongShapes) {
  std::mt19937_64 rng(25);
  const BlockShape shape{8, 2, 32};
  BlockParams params = init_block(shape, rng, false);
  EXPECT_NO_THROW(check_block(shape, params));
  params[kW1] = Tensor({8, 16}, 0.0);
  EXPECT_THROW(check_block(shape, params), ShapeError);
}

TEST(TransformerBlockTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(26);
  const BlockShape shape{8, 2, 16};
  const BlockParams params = init_block(shape, rng, false);
  const Tensor x = random_input(4, 8, rng);
  const Tensor probe = random_input(4, 8, rng);
  auto build = [&](Graph& g, std::span<const Tensor> p, std::vector<Var>& leaves) {
    BlockVars vars;
    for (std::size_t i = 0; i < kNumBlockTensors; ++i) {
      vars.field[i] = g.parameter(p[i]);
      leaves.push_back(vars.field[i]);
    }
    leaves.push_back(g.parameter(p[kNumBlockTensors]));
    Var y = transformer_block_forward(g, leaves.back(), vars, shape);
    return ops::sum(g, ops::mul(g, y, g.constant(probe)));
  };
  LossFn loss = [&](std::span<const Tensor> p) {
    Graph g;
    std::vector<Var> leaves;
    return g.value(build(g, p, leaves)).item();
  };
  GradFn grad = [&](std::span<const Tensor> p) {
    Graph g;
    std::vector<Var> leaves;
    g.backward(build(g, p, leaves));
    std::vector<Tensor> out;
    for (Var v : leaves) out.push_back(g.grad(v));
    return out;
  };
  std::vector<Tensor> all(params.field.begin(), params.field.end());
  all.push_back(x);
  const auto report = finite_diff_check(loss, grad, all, {});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

}  // namespace
}  // namespace cmirm
