// Copyright (c) 2026 The svae Authors
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

#include "svae/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svae/errors.h"
#include "svae/rng.h"

namespace svae {

namespace {

double Evaluate(const LossFn& f) {
  NoGradGuard no_grad;
  TensorD loss = f();
  if (loss.numel() != 1) {
    throw ContractError("gradient check needs a scalar function, got shape " +
                        ShapeString(loss.shape()));
  }
  return loss.item();
}

}  // namespace

GradCheckReport CompareGradients(const std::string& op_name, const LossFn& f,
                                 std::vector<TensorD> params,
                                 const std::vector<std::vector<double>>& analytic,
                                 const GradCheckOptions& options) {
  if (analytic.size() != params.size()) {
    throw ContractError("one analytic gradient per parameter is required");
  }
  const double base = Evaluate(f);
  if (Evaluate(f) != base) {
    throw ContractError("function under check for '" + op_name +
                        "' is not deterministic");
  }

  GradCheckReport report{op_name, 0.0, 0.0, 0};
  Rng rng(options.seed);
  const double eps = options.epsilon;
  for (size_t p = 0; p < params.size(); ++p) {
    TensorD& param = params[p];
    const int64_t n = param.numel();
    std::vector<int64_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (n > options.probes_per_tensor) {
      rng.Shuffle(coords.begin(), coords.end());
      coords.resize(options.probes_per_tensor);
    }
    auto values = param.mutable_values();
    for (int64_t i : coords) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = Evaluate(f);
      values[i] = saved - eps;
      const double minus = Evaluate(f);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[p][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max(
          {std::abs(a), std::abs(numeric), options.denominator_floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_relative_error =
          std::max(report.max_relative_error, abs_err / denom);
      ++report.probe_count;
    }
  }
  return report;
}

GradCheckReport FiniteDiffCheck(const std::string& op_name, const LossFn& f,
                                std::vector<TensorD> params,
                                const GradCheckOptions& options) {
  for (TensorD& p : params) {
    p.set_requires_grad(true);
    p.ZeroGrad();
  }
  TensorD loss = f();
  loss.Backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const TensorD& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }
  return CompareGradients(op_name, f, std::move(params), analytic, options);
}

}  // namespace svae
