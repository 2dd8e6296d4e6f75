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

#ifndef CMIRM_GRADCHECK_HPP_
#define CMIRM_GRADCHECK_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cmirm/tensor.hpp"

namespace cmirm {

// Loss value for a full parameter list. Must be pure: the checker evaluates
// it twice at the base point and rejects closures whose results differ.
using LossFn = std::function<double(std::span<const Tensor>)>;
// Analytic gradient, one tensor per parameter.
using GradFn = std::function<std::vector<Tensor>(std::span<const Tensor>)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Coordinates sampled per tensor; 0 checks every coordinate.
  std::size_t coords_per_tensor = 0;
  std::uint64_t seed = 0;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double denominator_floor = 1e-6;
};

struct TensorGradCheck {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<TensorGradCheck> tensors;
  double max_rel_error = 0.0;
  bool passed = true;
};

// Compares `grad` against central differences of `loss`. `names` labels the
// report rows and may be empty.
GradCheckReport finite_diff_check(const LossFn& loss, const GradFn& grad,
                                  std::vector<Tensor> params,
                                  std::span<const std::string> names,
                                  const GradCheckOptions& options = {});

}  // namespace cmirm

#endif  // CMIRM_GRADCHECK_HPP_
