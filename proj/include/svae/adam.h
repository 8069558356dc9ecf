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

#ifndef SVAE_ADAM_H_
#define SVAE_ADAM_H_

#include <cstdint>
#include <vector>

#include "svae/model.h"

namespace svae {

struct AdamConfig {
  double learning_rate = 1.25e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  void Validate() const;
  bool operator==(const AdamConfig&) const = default;
};

// Moments are aligned with ParamStore::entries(); empty until the first step.
template <typename T>
struct AdamState {
  AdamConfig config;
  int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

// One bias-corrected Adam update from the gradients held by `params`.
// Parameters without a gradient buffer are treated as having zero gradient.
// Throws NumericError naming the first parameter with a non-finite gradient;
// in that case neither the parameters nor the state are modified.
template <typename T>
void AdamStep(ParamStore<T>& params, AdamState<T>& state);

extern template void AdamStep(ParamStore<float>&, AdamState<float>&);
extern template void AdamStep(ParamStore<double>&, AdamState<double>&);

}  // namespace svae

#endif  // SVAE_ADAM_H_
