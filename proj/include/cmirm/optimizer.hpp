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

#ifndef CMIRM_OPTIMIZER_HPP_
#define CMIRM_OPTIMIZER_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "cmirm/tensor.hpp"

namespace cmirm {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam moments. The accumulators are created on the first step to match the
// parameter shapes and are shape-checked on every later step.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// One bias-corrected Adam update in place. Throws ShapeError if params,
// grads and moments disagree in count or shape.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads,
               AdamState& state);

}  // namespace cmirm

#endif  // CMIRM_OPTIMIZER_HPP_
