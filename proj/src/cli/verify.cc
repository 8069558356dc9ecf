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

#include "svae/verify.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>

#include "svae/errors.h"
#include "svae/eval.h"
#include "svae/grad_check.h"
#include "svae/mi.h"
#include "svae/model.h"
#include "svae/objective.h"
#include "svae/ops.h"
#include "svae/rng.h"

namespace svae {

namespace {

std::string Format(const char* fmt, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c);
  return buf;
}

TensorD Random(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = scale * rng.Normal();
  return TensorD::FromVector(shape, std::move(v));
}

// Values bounded away from zero, for ops with a kink at the origin.
TensorD AwayFromZero(const Shape& shape, Rng& rng) {
  std::vector<double> v(NumElements(shape));
  for (double& x : v) {
    x = (0.2 + 1.3 * rng.Uniform()) * (rng.Bernoulli(0.5) ? 1.0 : -1.0);
  }
  return TensorD::FromVector(shape, std::move(v));
}

// Scalar probe of an op output: sum(y * r) with a fixed random r.
std::function<TensorD(const TensorD&)> Probe(uint64_t seed) {
  return [seed](const TensorD& y) {
    Rng rng(seed);
    return ops::Sum(ops::Mul(y, Random(y.shape(), rng)));
  };
}

struct OpCase {
  std::string name;
  std::vector<TensorD> inputs;
  std::function<TensorD()> output;
};

CheckResult GradientResult(const GradCheckReport& r) {
  return {"gradients", r.op_name, r.max_relative_error < kGradientTolerance,
          Format("max_rel_err=%.3g max_abs_err=%.3g probes=%.0f",
                 r.max_relative_error, r.max_abs_error,
                 static_cast<double>(r.probe_count))};
}

}  // namespace

std::vector<CheckResult> VerifyGradients(uint64_t seed) {
  Rng rng(DeriveSeed(seed, "verify-gradients"));
  const auto probe = Probe(DeriveSeed(seed, "verify-probe"));
  std::vector<OpCase> cases;
  auto add = [&cases](std::string name, std::vector<TensorD> inputs,
                      std::function<TensorD(const std::vector<TensorD>&)> op) {
    OpCase c{std::move(name), inputs, nullptr};
    c.output = [op, inputs]() { return op(inputs); };
    cases.push_back(std::move(c));
  };
  using V = const std::vector<TensorD>&;

  add("affine", {Random({2, 3, 4}, rng), Random({4, 5}, rng), Random({5}, rng)},
      [](V t) { return ops::Affine(t[0], t[1], t[2]); });
  add("conv1d_k3", {Random({2, 6, 3}, rng), Random({3, 3, 4}, rng),
                    Random({4}, rng)},
      [](V t) { return ops::Conv1dSame(t[0], t[1], t[2]); });
  add("conv1d_k5", {Random({5, 2}, rng), Random({5, 2, 3}, rng),
                    Random({3}, rng)},
      [](V t) { return ops::Conv1dSame(t[0], t[1], t[2]); });
  add("avg_pool_time", {Random({2, 7, 3}, rng)},
      [](V t) { return ops::AvgPoolTime(t[0], 2); });
  add("global_avg_pool_time", {Random({2, 5, 3}, rng)},
      [](V t) { return ops::GlobalAvgPoolTime(t[0]); });
  add("relu", {AwayFromZero({3, 4}, rng)}, [](V t) { return ops::Relu(t[0]); });
  add("tanh", {Random({3, 4}, rng)}, [](V t) { return ops::Tanh(t[0]); });
  add("exp", {Random({3, 4}, rng)}, [](V t) { return ops::Exp(t[0]); });
  add("abs", {AwayFromZero({3, 4}, rng)}, [](V t) { return ops::Abs(t[0]); });
  add("square", {Random({3, 4}, rng)}, [](V t) { return ops::Square(t[0]); });
  add("scale", {Random({3, 4}, rng)},
      [](V t) { return ops::Scale(t[0], -1.7); });
  add("add_scalar", {Random({3, 4}, rng)},
      [](V t) { return ops::Square(ops::AddScalar(t[0], 0.3)); });
  add("softmax", {Random({2, 3, 5}, rng)},
      [](V t) { return ops::SoftmaxLastDim(t[0]); });
  add("add_broadcast", {Random({2, 3, 4}, rng), Random({4}, rng)},
      [](V t) { return ops::Add(t[0], t[1]); });
  add("sub", {Random({3, 4}, rng), Random({3, 4}, rng)},
      [](V t) { return ops::Sub(t[0], t[1]); });
  add("mul", {Random({3, 4}, rng), Random({3, 4}, rng)},
      [](V t) { return ops::Mul(t[0], t[1]); });
  add("concat_channels", {Random({2, 3, 2}, rng), Random({2, 3, 4}, rng)},
      [](V t) { return ops::ConcatChannels(t[0], t[1]); });
  add("slice_last_dim", {Random({2, 3, 6}, rng)},
      [](V t) { return ops::SliceLastDim(t[0], 2, 3); });
  add("tile_time", {Random({2, 3}, rng)},
      [](V t) { return ops::TileTime(t[0], 4); });
  add("layer_norm", {Random({2, 3, 6}, rng), Random({6}, rng), Random({6}, rng)},
      [](V t) { return ops::LayerNorm(t[0], t[1], t[2]); });
  add("dropout_training", {Random({4, 5}, rng)}, [](V t) {
    Rng mask(17);
    return ops::Dropout(t[0], 0.3, true, mask);
  });
  add("attention_full",
      {Random({2, 5, 4}, rng), Random({2, 5, 4}, rng), Random({2, 5, 4}, rng)},
      [](V t) { return ops::MultiHeadAttention(t[0], t[1], t[2], 2); });
  add("attention_diagonal",
      {Random({5, 4}, rng), Random({5, 4}, rng), Random({5, 4}, rng)},
      [](V t) {
        return ops::MultiHeadAttention(t[0], t[1], t[2], 2,
                                       ops::AttentionMask::kDiagonal);
      });
  add("sum", {Random({3, 4}, rng)}, [](V t) { return ops::Sum(t[0]); });
  add("mean", {Random({3, 4}, rng)}, [](V t) { return ops::Mean(t[0]); });
  add("kl_to_standard_normal", {Random({2, 3, 4}, rng), Random({2, 3, 4}, rng)},
      [](V t) { return KlToStandardNormal<double>({t[0], t[1]}); });
  add("reconstruction_loss",
      {Random({2, 3, 4}, rng), Random({2, 3, 4}, rng), Random({2, 3, 4}, rng)},
      [](V t) { return ReconstructionLoss(t[0], t[1], t[2]); });
  const TensorD noise = Random({2, 3}, rng);
  add("reparameterize", {Random({2, 3}, rng), Random({2, 3}, rng)},
      [noise](V t) { return Reparameterize<double>({t[0], t[1]}, noise); });

  std::vector<CheckResult> results;
  GradCheckOptions options;
  options.seed = DeriveSeed(seed, "verify-coordinates");
  for (OpCase& c : cases) {
    auto output = c.output;
    const bool scalar_op = c.name == "sum" || c.name == "mean" ||
                           c.name == "kl_to_standard_normal" ||
                           c.name == "reconstruction_loss";
    LossFn f = [output, probe, scalar_op]() {
      TensorD y = output();
      return scalar_op ? y : probe(y);
    };
    results.push_back(
        GradientResult(FiniteDiffCheck(c.name, f, c.inputs, options)));
  }

  // End-to-end weighted loss on the tiny preset, training mode, with every
  // random stream re-created per evaluation so the function is fixed.
  Model<double> model(ModelConfig::Tiny(), DeriveSeed(seed, "verify-model"));
  const ModelConfig& mc = model.config();
  const TensorD x = Random({2, 2 * mc.MinSpeakerFrames(), mc.feature_dim}, rng);
  const uint64_t stream_seed = DeriveSeed(seed, "verify-streams");
  LossFn loss = [&model, x, stream_seed]() {
    Rng shuffle(stream_seed), dropout(stream_seed + 1), reparam(stream_seed + 2);
    return TotalLoss(model, x, LossWeights{0.5, 0.25}, /*training=*/true,
                     LossStreams{&shuffle, &dropout, &reparam})
        .total;
  };
  std::vector<TensorD> params;
  for (auto& [name, tensor] : model.params().entries()) params.push_back(tensor);
  // Differences of a loss of order 10 carry about 1e-10 of rounding noise
  // at this step, so gradients below 1e-5 (attention key biases are exactly
  // zero) are compared against the floor rather than their own magnitude.
  GradCheckOptions e2e = options;
  e2e.epsilon = 1e-5;
  e2e.denominator_floor = 1e-5;
  results.push_back(
      GradientResult(FiniteDiffCheck("end_to_end_loss", loss, params, e2e)));
  return results;
}

std::vector<CheckResult> VerifyKl(uint64_t seed) {
  std::vector<CheckResult> results;
  auto check = [&results](std::string name, bool ok, std::string detail) {
    results.push_back({"kl", std::move(name), ok, std::move(detail)});
  };
  const double e = std::numbers::e;
  const double k0 = KlToStandardNormal(std::vector<double>{0.0},
                                       std::vector<double>{0.0});
  check("prior_equals_posterior", std::abs(k0) <= 1e-9, Format("kl=%.3g", k0));
  const double k1 = KlToStandardNormal(std::vector<double>{1.0, 0.0},
                                       std::vector<double>{0.0, 0.0});
  check("unit_mean_offset", std::abs(k1 - 0.5) <= 1e-9, Format("kl=%.12g", k1));
  const double k2 = KlToStandardNormal(std::vector<double>{0.0},
                                       std::vector<double>{1.0});
  check("variance_e", std::abs(k2 - 0.5 * (e - 2.0)) <= 1e-9 &&
                          std::abs(k2 - 0.35914) <= 1e-3,
        Format("kl=%.12g expected=%.12g", k2, 0.5 * (e - 2.0)));

  // Composite Simpson integration of q log(q / p) for q = N(0, e).
  {
    const double var = e;
    const int n = 20000;
    const double lo = -40.0, hi = 40.0, h = (hi - lo) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double z = lo + i * h;
      const double log_q = -0.5 * (std::log(2 * std::numbers::pi * var) +
                                   z * z / var);
      const double log_p = -0.5 * (std::log(2 * std::numbers::pi) + z * z);
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w * std::exp(log_q) * (log_q - log_p);
    }
    const double integral = acc * h / 3.0;
    check("variance_e_quadrature", std::abs(integral - k2) <= 1e-9,
          Format("quadrature=%.12g closed_form=%.12g", integral, k2));
  }

  Rng rng(DeriveSeed(seed, "verify-kl"));
  double worst = 0.0;
  bool nonnegative = true;
  for (int p = 0; p < 20; ++p) {
    const int dim = static_cast<int>(rng.UniformInt(1, 6));
    std::vector<double> mean(dim), log_var(dim);
    for (int d = 0; d < dim; ++d) {
      mean[d] = (0.5 + 1.5 * rng.Uniform()) * (rng.Bernoulli(0.5) ? 1 : -1);
      log_var[d] = -2.0 + 3.5 * rng.Uniform();
    }
    const double closed = KlToStandardNormal(mean, log_var);
    nonnegative = nonnegative && closed >= 0.0;
    const int samples = 1000000;
    double acc = 0.0;
    for (int s = 0; s < samples; ++s) {
      double log_ratio = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double eps = rng.Normal();
        const double z = mean[d] + std::exp(0.5 * log_var[d]) * eps;
        log_ratio += -0.5 * eps * eps - 0.5 * log_var[d] + 0.5 * z * z;
      }
      acc += log_ratio;
    }
    const double mc = acc / samples;
    worst = std::max(worst, std::abs(mc - closed) / closed);
  }
  check("monte_carlo_1e6_x20", worst < 0.01,
        Format("max_relative_error=%.4g", worst));
  check("nonnegative", nonnegative, "closed form >= 0 on all posteriors");
  return results;
}

std::vector<CheckResult> VerifyMiBound(uint64_t seed) {
  std::vector<CheckResult> results;
  auto check = [&results](std::string name, bool ok, std::string detail) {
    results.push_back({"mi-bound", std::move(name), ok, std::move(detail)});
  };
  const AnalyticLabResult anchor = AnalyticGaussianLab(1.0, 1.0);
  check("anchor_a1_s1",
        anchor.mi_exact == 0.5 * std::log(2.0) && anchor.expected_kl_exact == 0.5,
        Format("mi=%.17g expected_kl=%.17g", anchor.mi_exact,
               anchor.expected_kl_exact));

  bool gap_ok = true;
  double min_gap = INFINITY;
  for (int i = 0; i <= 30; ++i) {
    for (int j = 0; j <= 40; ++j) {
      const double a = 0.1 * i;
      const double s2 = 0.1 * std::pow(100.0, j / 40.0);
      const AnalyticLabResult r = AnalyticGaussianLab(a, s2);
      const double gap = r.expected_kl_exact - r.mi_exact;
      min_gap = std::min(min_gap, gap);
      gap_ok = gap_ok && gap >= 0.0;
    }
  }
  check("bound_gap_dense_grid", gap_ok, Format("min_gap=%.3g", min_gap));

  const int64_t n = 10000;
  for (double a : {0.0, 0.5, 1.0, 2.0}) {
    for (double s2 : {0.25, 1.0, 4.0}) {
      const AnalyticLabResult exact = AnalyticGaussianLab(a, s2);
      const MiBoundReport est =
          EstimateVariationalMi(LabPosterior(a, s2), StratifiedStandardNormal(),
                                n, DeriveSeed(seed, "verify-mi", n));
      const double gap = exact.expected_kl_exact - exact.mi_exact;
      const bool ok = gap >= 0.0 &&
                      std::abs(est.mi_estimate - exact.mi_exact) <= 0.02 &&
                      std::abs(est.expected_kl - exact.expected_kl_exact) <= 0.02;
      char name[64];
      std::snprintf(name, sizeof(name), "lab_a%g_s%g", a, s2);
      char detail[256];
      std::snprintf(detail, sizeof(detail),
                    "mi %.4f vs %.4f, expected_kl %.4f vs %.4f, gap %.4f",
                    est.mi_estimate, exact.mi_exact, est.expected_kl,
                    exact.expected_kl_exact, gap);
      check(name, ok, detail);
    }
  }

  const MiBoundReport zero =
      EstimateVariationalMi([](const Datum&) {
        return DiagonalGaussian{{0.0, 0.0}, {0.0, 0.0}};
      }, StratifiedStandardNormal(), 2000, DeriveSeed(seed, "verify-mi-zero"));
  const double tol = 3.0 * std::max(zero.mi_standard_error, 1e-12);
  check("zero_information_encoder",
        std::abs(zero.mi_estimate) <= tol && std::abs(zero.expected_kl) <= tol &&
            std::abs(zero.marginal_kl_estimate) <= tol,
        Format("mi=%.3g expected_kl=%.3g marginal=%.3g", zero.mi_estimate,
               zero.expected_kl, zero.marginal_kl_estimate));

  bool threw = false;
  try {
    EstimateVariationalMi(LabPosterior(1.0, 1.0), StratifiedStandardNormal(), 1,
                          seed);
  } catch (const SampleSizeError&) {
    threw = true;
  }
  check("rejects_n_below_2", threw, "n=1 raises a sample-size error");
  return results;
}

double BruteForceEer(const std::vector<double>& positives,
                     const std::vector<double>& negatives) {
  std::set<double> distinct(positives.begin(), positives.end());
  distinct.insert(negatives.begin(), negatives.end());
  std::vector<double> thresholds(distinct.begin(), distinct.end());
  thresholds.push_back(INFINITY);
  double prev_far = 1.0, prev_frr = 0.0;
  for (size_t k = 0; k < thresholds.size(); ++k) {
    const double th = thresholds[k];
    double rejected = 0, accepted = 0;
    for (double s : positives) rejected += s < th;
    for (double s : negatives) accepted += s >= th;
    const double frr = rejected / positives.size();
    const double far = accepted / negatives.size();
    if (far - frr <= 0.0) {
      if (far == frr || k == 0) return far;
      const double alpha = (prev_far - prev_frr) /
                           ((prev_far - prev_frr) - (far - frr));
      return prev_far + alpha * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 0.0;
}

std::vector<CheckResult> VerifyEerOracle(uint64_t seed) {
  std::vector<CheckResult> results;
  auto check = [&results](std::string name, bool ok, std::string detail) {
    results.push_back({"eer-oracle", std::move(name), ok, std::move(detail)});
  };
  const std::vector<double> p1{0.9, 0.8}, n1{0.7, 0.6};
  check("perfect_separation", ComputeEer(p1, n1) == 0.0,
        Format("eer=%.6g", ComputeEer(p1, n1)));
  const std::vector<double> p2{0.9, 0.6}, n2{0.8, 0.5};
  check("interleaved_pair", std::abs(ComputeEer(p2, n2) - 0.5) <= 1e-12,
        Format("eer=%.6g", ComputeEer(p2, n2)));

  Rng rng(DeriveSeed(seed, "verify-eer"));
  double worst = 0.0;
  bool monotone_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int np = static_cast<int>(rng.UniformInt(1, 40));
    const int nn = static_cast<int>(rng.UniformInt(1, 40));
    const bool coarse = trial % 3 == 0;  // coarse grids force ties
    const double shift = rng.Uniform();
    auto draw = [&](double mu) {
      double s = mu + rng.Normal();
      return coarse ? std::round(s * 4.0) / 4.0 : s;
    };
    std::vector<double> pos(np), neg(nn);
    for (double& s : pos) s = draw(shift);
    for (double& s : neg) s = draw(0.0);
    const double eer = ComputeEer(pos, neg);
    worst = std::max(worst, std::abs(eer - BruteForceEer(pos, neg)));
    std::vector<double> tp(pos), tn(neg);
    for (double& s : tp) s = std::exp(2.0 * s) + 3.0;
    for (double& s : tn) s = std::exp(2.0 * s) + 3.0;
    monotone_ok = monotone_ok && std::abs(ComputeEer(tp, tn) - eer) <= 1e-12;
  }
  check("brute_force_100_sets", worst <= 1e-12,
        Format("max_abs_difference=%.3g", worst));
  check("increasing_transform_invariance", monotone_ok,
        "exp(2s)+3 leaves every EER unchanged");

  std::vector<double> pos(10000), neg(10000);
  for (double& s : pos) s = rng.Normal();
  for (double& s : neg) s = rng.Normal();
  const double same = ComputeEer(pos, neg);
  check("identical_distributions_1e4", std::abs(same - 0.5) <= 0.02,
        Format("eer=%.4f", same));
  return results;
}

const std::vector<std::string>& VerifySuiteNames() {
  static const std::vector<std::string> names{"gradients", "kl", "mi-bound",
                                              "eer-oracle"};
  return names;
}

std::vector<CheckResult> RunVerifySuite(const std::string& suite,
                                        uint64_t seed) {
  if (suite == "gradients") return VerifyGradients(seed);
  if (suite == "kl") return VerifyKl(seed);
  if (suite == "mi-bound") return VerifyMiBound(seed);
  if (suite == "eer-oracle") return VerifyEerOracle(seed);
  throw ConfigError("unknown verify suite '" + suite +
                    "' (accepted: gradients, kl, mi-bound, eer-oracle)");
}

}  // namespace svae
