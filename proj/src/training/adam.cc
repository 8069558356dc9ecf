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

#include "svae/adam.h"

#include <cmath>
#include <string>

#include "svae/errors.h"

namespace svae {

void AdamConfig::Validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive and finite");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

template <typename T>
void AdamStep(ParamStore<T>& params, AdamState<T>& state) {
  auto& entries = params.entries();
  for (const auto& [name, p] : entries) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter " + name);
      }
    }
  }
  if (state.m.empty()) {
    state.m.resize(entries.size());
    state.v.resize(entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
      state.m[i].assign(entries[i].second.numel(), T(0));
      state.v[i].assign(entries[i].second.numel(), T(0));
    }
  }
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw ContractError("Adam state does not match the parameter set");
  }
  for (size_t i = 0; i < entries.size(); ++i) {
    const Tensor<T>& p = entries[i].second;
    if (state.m[i].size() != static_cast<size_t>(p.numel()) ||
        state.v[i].size() != static_cast<size_t>(p.numel())) {
      throw ContractError("Adam moments for " + entries[i].first +
                          " do not match the parameter shape");
    }
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (size_t i = 0; i < entries.size(); ++i) {
    Tensor<T>& p = entries[i].second;
    const T* grad = p.has_grad() ? p.grad().data() : nullptr;
    std::span<T> value = p.mutable_values();
    std::vector<T>& ms = state.m[i];
    std::vector<T>& vs = state.v[i];
    for (size_t k = 0; k < ms.size(); ++k) {
      const double g = grad ? grad[k] : 0.0;
      const double m = c.beta1 * ms[k] + (1.0 - c.beta1) * g;
      const double v = c.beta2 * vs[k] + (1.0 - c.beta2) * g * g;
      ms[k] = static_cast<T>(m);
      vs[k] = static_cast<T>(v);
      value[k] -= static_cast<T>(c.learning_rate * (m / correction1) /
                                 (std::sqrt(v / correction2) + c.epsilon));
    }
  }
}

template void AdamStep(ParamStore<float>&, AdamState<float>&);
template void AdamStep(ParamStore<double>&, AdamState<double>&);

}  // namespace svae
