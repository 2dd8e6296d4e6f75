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

#include "cmirm/optimizer.hpp"

#include <cmath>
#include <string>

#include "cmirm/error.hpp"

namespace cmirm {

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads,
               AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) +
                     " params but " + std::to_string(grads.size()) + " grads");
  }
  if (state.first_moment.empty() && state.second_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape(), 0.0);
      state.second_moment.emplace_back(p.shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks a different parameter set");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.first_moment[i]) ||
        !params[i].same_shape(state.second_moment[i])) {
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i) +
                       " " + shape_string(params[i].shape()) + " vs grad " +
                       shape_string(grads[i].shape()));
    }
  }

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

}  // namespace cmirm
