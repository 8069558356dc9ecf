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

#ifndef SVAE_MI_H_
#define SVAE_MI_H_

#include <cstdint>
#include <functional>
#include <vector>

namespace svae {

class Rng;

// Variational mutual information diagnostics:
//   I_v(x, z) = E_x[KL(q(z|x) || p(z))] - KL(q(z) || p(z)),
// with p(z) = N(0, I) and q(z) the data-averaged posterior.
struct MiBoundReport {
  double mi_estimate = 0.0;
  double expected_kl = 0.0;
  double marginal_kl_estimate = 0.0;
  // Plain Monte Carlo standard error of mi_estimate (an upper bound for the
  // stratified sampler used here).
  double mi_standard_error = 0.0;
  int64_t sample_count = 0;
};

struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> log_variance;
};

using Datum = std::vector<double>;
// Posterior q(z | x) of the encoder under study.
using PosteriorFn = std::function<DiagonalGaussian(const Datum& x)>;
// Draws n data points from p_d(x).
using DataSampler = std::function<std::vector<Datum>(int64_t n, Rng& rng)>;

// Monte Carlo estimate over n data draws. expected_kl is the mean
// closed-form KL; the marginal KL scores one latent draw per datum against
// the mixture of all n posteriors. Latent noise is Latin-hypercube
// stratified per dimension. Throws SampleSizeError for n < 2.
MiBoundReport EstimateVariationalMi(const PosteriorFn& posterior,
                                    const DataSampler& data, int64_t n,
                                    uint64_t seed);

// Closed-form values for x ~ N(0, 1), q(z | x) = N(a x, sigma2):
//   mi_exact = 0.5 ln(1 + a^2 / sigma2)
//   expected_kl_exact = 0.5 (a^2 + sigma2 - ln sigma2 - 1).
struct AnalyticLabResult {
  double mi_exact = 0.0;
  double expected_kl_exact = 0.0;
};

// Throws DomainError unless sigma2 > 0.
AnalyticLabResult AnalyticGaussianLab(double a, double sigma2);

// Encoder of the analytic family.
PosteriorFn LabPosterior(double a, double sigma2);
// One-dimensional N(0, 1) draws, stratified into n equiprobable strata.
DataSampler StratifiedStandardNormal();

}  // namespace svae

#endif  // SVAE_MI_H_
