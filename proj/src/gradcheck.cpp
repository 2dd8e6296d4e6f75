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

#include "cmirm/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "cmirm/error.hpp"

namespace cmirm {

GradCheckReport finite_diff_check(const LossFn& loss, const GradFn& grad,
                                  std::vector<Tensor> params,
                                  std::span<const std::string> names,
                                  const GradCheckOptions& options) {
  const double base = loss(params);
  const double again = loss(params);
  if (std::bit_cast<std::uint64_t>(base) != std::bit_cast<std::uint64_t>(again)) {
    throw ContractError("finite_diff_check: loss closure is not deterministic");
  }
  const std::vector<Tensor> analytic = grad(params);
  if (analytic.size() != params.size()) {
    throw ShapeError("finite_diff_check: gradient count differs from parameter count");
  }

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (!analytic[t].same_shape(params[t])) {
      throw ShapeError("finite_diff_check: gradient shape mismatch at tensor " +
                       std::to_string(t));
    }
    TensorGradCheck row;
    row.name = t < names.size() ? names[t] : "param" + std::to_string(t);

    std::vector<std::size_t> coords(params[t].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.coords_per_tensor > 0 && options.coords_per_tensor < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      const double saved = params[t][i];
      params[t][i] = saved + options.step;
      const double up = loss(params);
      params[t][i] = saved - options.step;
      const double down = loss(params);
      params[t][i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[t][i];
      const double abs_err = std::abs(a - numeric);
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      row.max_abs_error = std::max(row.max_abs_error, abs_err);
      row.max_rel_error = std::max(row.max_rel_error, abs_err / denom);
      ++row.coords_checked;
    }
    row.passed = row.max_rel_error < options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, row.max_rel_error);
    report.passed = report.passed && row.passed;
    report.tensors.push_back(std::move(row));
  }
  return report;
}

}  // namespace cmirm
