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

#ifndef SVAE_GRAD_CHECK_H_
#define SVAE_GRAD_CHECK_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svae/tensor.h"

namespace svae {

struct GradCheckReport {
  std::string op_name;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  int64_t probe_count = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-6;
  // Coordinates probed per parameter tensor; tensors with fewer elements
  // are probed exhaustively.
  int64_t probes_per_tensor = 16;
  uint64_t seed = 0;
  // Lower bound on the denominator of the relative error, so that
  // gradients that are zero on both routes do not divide by zero.
  double denominator_floor = 1e-7;
};

// Scalar-valued function of the parameters; must rebuild the graph from the
// current parameter values on each call and be deterministic.
using LossFn = std::function<TensorD()>;

// Compares the given analytic gradients, one vector per parameter, against
// central differences (f(p + eps) - f(p - eps)) / (2 eps) on randomly
// probed coordinates.
GradCheckReport CompareGradients(const std::string& op_name, const LossFn& f,
                                 std::vector<TensorD> params,
                                 const std::vector<std::vector<double>>& analytic,
                                 const GradCheckOptions& options = {});

// Runs backward on f() to obtain reverse-mode gradients, then compares them
// with central differences. Throws ContractError if two evaluations of f at
// the same point differ.
GradCheckReport FiniteDiffCheck(const std::string& op_name, const LossFn& f,
                                std::vector<TensorD> params,
                                const GradCheckOptions& options = {});

}  // namespace svae

#endif  // SVAE_GRAD_CHECK_H_
