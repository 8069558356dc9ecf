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

#ifndef SVAE_VERIFY_H_
#define SVAE_VERIFY_H_

#include <cstdint>
#include <string>
#include <vector>

namespace svae {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

// Suites: "gradients", "kl", "mi-bound", "eer-oracle". Throws ConfigError
// for an unknown suite name.
std::vector<CheckResult> RunVerifySuite(const std::string& suite,
                                        uint64_t seed);
const std::vector<std::string>& VerifySuiteNames();

// Individual suites.
std::vector<CheckResult> VerifyGradients(uint64_t seed);
std::vector<CheckResult> VerifyKl(uint64_t seed);
std::vector<CheckResult> VerifyMiBound(uint64_t seed);
std::vector<CheckResult> VerifyEerOracle(uint64_t seed);

// Relative-error threshold of the gradient suite.
inline constexpr double kGradientTolerance = 1e-4;

// O(n^2) EER reference: evaluates FAR and FRR at every distinct pooled
// score by direct counting and interpolates at the first sign change.
double BruteForceEer(const std::vector<double>& positives,
                     const std::vector<double>& negatives);

}  // namespace svae

#endif  // SVAE_VERIFY_H_
