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

#include "svae/objective.h"

#include <cmath>
#include <cstdio>

#include "svae/data.h"
#include "svae/errors.h"

namespace svae {

void LossWeights::Validate() const {
  if (!(beta_c >= 0.0) || !(beta_s >= 0.0) || !std::isfinite(beta_c) ||
      !std::isfinite(beta_s)) {
    throw ConfigError("KL weights must be finite and non-negative, got beta_c=" +
                      std::to_string(beta_c) +
                      " beta_s=" + std::to_string(beta_s));
  }
}

template <typename T>
Tensor<T> KlToStandardNormal(const GaussianPosterior<T>& posterior) {
  const Tensor<T>& mean = posterior.mean;
  const Tensor<T>& log_var = posterior.log_variance;
  if (mean.shape() != log_var.shape()) {
    throw DimensionError("KL: mean " + ShapeString(mean.shape()) +
                         " vs log-variance " + ShapeString(log_var.shape()));
  }
  const int64_t rows = mean.numel() / mean.dim(-1);
  Tensor<T> terms = ops::AddScalar(
      ops::Sub(ops::Add(ops::Square(mean), ops::Exp(log_var)), log_var), T(-1));
  return ops::Scale(ops::Sum(terms), static_cast<T>(0.5 / rows));
}

double KlToStandardNormal(std::span<const double> mean,
                          std::span<const double> log_variance) {
  if (mean.size() != log_variance.size()) {
    throw DimensionError("KL: mean and log-variance sizes differ");
  }
  double kl = 0.0;
  for (size_t i = 0; i < mean.size(); ++i) {
    kl += mean[i] * mean[i] + std::exp(log_variance[i]) - log_variance[i] - 1.0;
  }
  return 0.5 * kl;
}

template <typename T>
Tensor<T> ReconstructionLoss(const Tensor<T>& pre_out, const Tensor<T>& post_out,
                             const Tensor<T>& target) {
  if (pre_out.shape() != target.shape() || post_out.shape() != target.shape()) {
    throw DimensionError("reconstruction loss: pre " +
                         ShapeString(pre_out.shape()) + ", post " +
                         ShapeString(post_out.shape()) + ", target " +
                         ShapeString(target.shape()));
  }
  auto branch = [&target](const Tensor<T>& out) {
    Tensor<T> diff = ops::Sub(out, target);
    return ops::Add(ops::Mean(ops::Square(diff)), ops::Mean(ops::Abs(diff)));
  };
  return ops::Add(branch(pre_out), branch(post_out));
}

template <typename T>
Tensor<T> Reparameterize(const GaussianPosterior<T>& posterior,
                         const Tensor<T>& noise) {
  if (noise.shape() != posterior.mean.shape()) {
    throw DimensionError("reparameterize: noise " + ShapeString(noise.shape()) +
                         " vs mean " + ShapeString(posterior.mean.shape()));
  }
  Tensor<T> stddev = ops::Exp(ops::Scale(posterior.log_variance, T(0.5)));
  return ops::Add(posterior.mean, ops::Mul(stddev, noise));
}

namespace {

template <typename T>
Tensor<T> StandardNormalLike(const Tensor<T>& like, Rng& rng) {
  std::vector<T> values(like.numel());
  rng.FillNormal<T>(values);
  return Tensor<T>::FromVector(like.shape(), std::move(values));
}

}  // namespace

template <typename T>
LossResult<T> ComputeLoss(const Model<T>& model, const Tensor<T>& content_input,
                          const Tensor<T>& speaker_input,
                          const LossWeights& weights, bool training,
                          bool sample_latents, const LossStreams& streams) {
  weights.Validate();
  ForwardOptions options;
  options.training = training;
  options.dropout_rng = streams.dropout;

  LossResult<T> result;
  result.content = model.EncodeContent(content_input, options);
  result.speaker = model.EncodeSpeaker(speaker_input, options);
  Tensor<T> z_c = result.content.mean;
  Tensor<T> z_s = result.speaker.mean;
  if (sample_latents) {
    if (!streams.reparam) {
      throw ContractError("sampling latents needs a reparameterization stream");
    }
    z_c = Reparameterize(result.content, StandardNormalLike(z_c, *streams.reparam));
    z_s = Reparameterize(result.speaker, StandardNormalLike(z_s, *streams.reparam));
  }
  DecoderOutput<T> decoded = model.Decode(z_c, z_s, options);

  Tensor<T> recon =
      ReconstructionLoss(decoded.pre_out, decoded.post_out, content_input);
  Tensor<T> content_kl = KlToStandardNormal(result.content);
  Tensor<T> speaker_kl = KlToStandardNormal(result.speaker);
  const T beta_c = static_cast<T>(weights.beta_c);
  const T beta_s = static_cast<T>(weights.beta_s);
  result.total = ops::Add(ops::Add(recon, ops::Scale(content_kl, beta_c)),
                          ops::Scale(speaker_kl, beta_s));
  result.breakdown = {static_cast<double>(result.total.item()),
                      static_cast<double>(recon.item()),
                      static_cast<double>(content_kl.item()),
                      static_cast<double>(speaker_kl.item()),
                      weights.beta_c,
                      weights.beta_s};
  return result;
}

template <typename T>
LossResult<T> TotalLoss(const Model<T>& model, const Tensor<T>& x,
                        const LossWeights& weights, bool training,
                        const LossStreams& streams,
                        const EncoderInputHook<T>* hook) {
  Tensor<T> speaker_input = x;
  if (training) {
    if (!streams.shuffle) {
      throw ContractError("training loss needs a segment-shuffle stream");
    }
    const int64_t batch = x.rank() == 3 ? x.dim(0) : 1;
    const int64_t frames = x.dim(-2);
    const int64_t dim = x.dim(-1);
    const int64_t item = frames * dim;
    std::vector<T> shuffled;
    shuffled.reserve(x.numel());
    for (int64_t b = 0; b < batch; ++b) {
      const auto part = SegmentShuffle<T>(x.values().subspan(b * item, item),
                                          frames, dim, *streams.shuffle);
      shuffled.insert(shuffled.end(), part.begin(), part.end());
    }
    speaker_input = Tensor<T>::FromVector(x.shape(), std::move(shuffled));
  }
  if (hook && hook->callback) hook->callback(x, speaker_input);
  return ComputeLoss(model, x, speaker_input, weights, training, training,
                     streams);
}

std::string FormatLossRecord(int64_t step, const LossBreakdown& loss) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld\t%.9g\t%.9g\t%.9g\t%.9g",
                static_cast<long long>(step), loss.total, loss.reconstruction,
                loss.content_kl, loss.speaker_kl);
  return buf;
}

#define SVAE_INSTANTIATE_OBJECTIVE(T)                                         \
  template Tensor<T> KlToStandardNormal(const GaussianPosterior<T>&);         \
  template Tensor<T> ReconstructionLoss(const Tensor<T>&, const Tensor<T>&,   \
                                        const Tensor<T>&);                    \
  template Tensor<T> Reparameterize(const GaussianPosterior<T>&,              \
                                    const Tensor<T>&);                        \
  template LossResult<T> ComputeLoss(const Model<T>&, const Tensor<T>&,       \
                                     const Tensor<T>&, const LossWeights&,    \
                                     bool, bool, const LossStreams&);         \
  template LossResult<T> TotalLoss(const Model<T>&, const Tensor<T>&,         \
                                   const LossWeights&, bool,                  \
                                   const LossStreams&,                        \
                                   const EncoderInputHook<T>*);

SVAE_INSTANTIATE_OBJECTIVE(float)
SVAE_INSTANTIATE_OBJECTIVE(double)
#undef SVAE_INSTANTIATE_OBJECTIVE

}  // namespace svae
