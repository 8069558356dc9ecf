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

#include "svae/mi.h"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <numbers>
#include <numeric>

#include "svae/errors.h"
#include "svae/objective.h"
#include "svae/rng.h"

namespace svae {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

double NormalQuantile(double p) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

// Uniform on the open interval (0, 1).
double OpenUniform(Rng& rng) {
  double u;
  do {
    u = rng.Uniform();
  } while (u <= 0.0);
  return u;
}

}  // namespace

MiBoundReport EstimateVariationalMi(const PosteriorFn& posterior,
                                    const DataSampler& data, int64_t n,
                                    uint64_t seed) {
  if (n < 2) {
    throw SampleSizeError("variational MI estimate needs n >= 2, got " +
                          std::to_string(n));
  }
  Rng rng(seed);
  const std::vector<Datum> xs = data(n, rng);
  if (static_cast<int64_t>(xs.size()) != n) {
    throw ContractError("data sampler returned the wrong number of draws");
  }
  std::vector<DiagonalGaussian> posts;
  posts.reserve(n);
  for (const Datum& x : xs) posts.push_back(posterior(x));
  const size_t dim = posts.front().mean.size();

  std::vector<double> kl(n);
  for (int64_t i = 0; i < n; ++i) {
    kl[i] = KlToStandardNormal(posts[i].mean, posts[i].log_variance);
  }

  // Latin-hypercube standard-normal noise, one stratum per draw per dim.
  std::vector<double> noise(n * dim);
  std::vector<int64_t> strata(n);
  for (size_t d = 0; d < dim; ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    rng.Shuffle(strata.begin(), strata.end());
    for (int64_t j = 0; j < n; ++j) {
      noise[j * dim + d] = NormalQuantile(
          (static_cast<double>(strata[j]) + OpenUniform(rng)) /
          static_cast<double>(n));
    }
  }

  // Per-posterior constants of the log density.
  std::vector<double> inv_var(n * dim);
  std::vector<double> log_norm(n, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (size_t d = 0; d < dim; ++d) {
      inv_var[i * dim + d] = std::exp(-posts[i].log_variance[d]);
      log_norm[i] -= 0.5 * (kLogTwoPi + posts[i].log_variance[d]);
    }
  }

  std::vector<double> log_density(n);
  std::vector<double> contribution(n);
  std::vector<double> z(dim);
  const double log_n = std::log(static_cast<double>(n));
  for (int64_t j = 0; j < n; ++j) {
    double log_prior = 0.0;
    for (size_t d = 0; d < dim; ++d) {
      z[d] = posts[j].mean[d] +
             std::exp(0.5 * posts[j].log_variance[d]) * noise[j * dim + d];
      log_prior -= 0.5 * (kLogTwoPi + z[d] * z[d]);
    }
    double peak = -INFINITY;
    for (int64_t i = 0; i < n; ++i) {
      double q = log_norm[i];
      for (size_t d = 0; d < dim; ++d) {
        const double diff = z[d] - posts[i].mean[d];
        q -= 0.5 * diff * diff * inv_var[i * dim + d];
      }
      log_density[i] = q;
      peak = std::max(peak, q);
    }
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += std::exp(log_density[i] - peak);
    const double log_marginal = peak + std::log(acc) - log_n;
    contribution[j] = log_marginal - log_prior;
  }

  MiBoundReport report;
  report.sample_count = n;
  report.expected_kl =
      std::accumulate(kl.begin(), kl.end(), 0.0) / static_cast<double>(n);
  report.marginal_kl_estimate =
      std::accumulate(contribution.begin(), contribution.end(), 0.0) /
      static_cast<double>(n);
  report.mi_estimate = report.expected_kl - report.marginal_kl_estimate;
  double sq = 0.0;
  for (int64_t j = 0; j < n; ++j) {
    const double m = kl[j] - contribution[j] - report.mi_estimate;
    sq += m * m;
  }
  report.mi_standard_error =
      std::sqrt(sq / static_cast<double>(n - 1) / static_cast<double>(n));
  return report;
}

AnalyticLabResult AnalyticGaussianLab(double a, double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2) || !std::isfinite(a)) {
    throw DomainError("analytic lab needs finite a and sigma2 > 0, got sigma2=" +
                      std::to_string(sigma2));
  }
  return {0.5 * std::log1p(a * a / sigma2),
          0.5 * (a * a + sigma2 - std::log(sigma2) - 1.0)};
}

PosteriorFn LabPosterior(double a, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("lab posterior needs sigma2 > 0");
  const double log_var = std::log(sigma2);
  return [a, log_var](const Datum& x) {
    return DiagonalGaussian{{a * x.at(0)}, {log_var}};
  };
}

DataSampler StratifiedStandardNormal() {
  return [](int64_t n, Rng& rng) {
    std::vector<Datum> out(n);
    for (int64_t i = 0; i < n; ++i) {
      out[i] = {NormalQuantile((static_cast<double>(i) + OpenUniform(rng)) /
                               static_cast<double>(n))};
    }
    return out;
  };
}

}  // namespace svae
