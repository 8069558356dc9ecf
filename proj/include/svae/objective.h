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

#ifndef SVAE_OBJECTIVE_H_
#define SVAE_OBJECTIVE_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "svae/model.h"
#include "svae/rng.h"
#include "svae/tensor.h"

namespace svae {

// Scalar loss terms of one evaluation. total is computed as
// reconstruction + beta_c * content_kl + beta_s * speaker_kl in the
// precision of the model.
struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double content_kl = 0.0;
  double speaker_kl = 0.0;
  double beta_c = 0.0;
  double beta_s = 0.0;
};

struct LossWeights {
  double beta_c = 1.0;
  double beta_s = 1.0;
  // Throws ConfigError on negative or non-finite weights.
  void Validate() const;
};

// Closed-form KL(N(mean, exp(log_variance)) || N(0, I)), summed over the
// last (latent) dimension and averaged over all leading dimensions, i.e.
// frames and batch items.
template <typename T>
Tensor<T> KlToStandardNormal(const GaussianPosterior<T>& posterior);

// Same quantity for one diagonal Gaussian given as plain arrays.
double KlToStandardNormal(std::span<const double> mean,
                          std::span<const double> log_variance);

// (MSE + MAE)(pre_out, target) + (MSE + MAE)(post_out, target), each term a
// mean over all elements.
template <typename T>
Tensor<T> ReconstructionLoss(const Tensor<T>& pre_out, const Tensor<T>& post_out,
                             const Tensor<T>& target);

// z = mean + exp(0.5 * log_variance) * noise.
template <typename T>
Tensor<T> Reparameterize(const GaussianPosterior<T>& posterior,
                         const Tensor<T>& noise);

template <typename T>
struct LossResult {
  Tensor<T> total;  // graph root for backward
  LossBreakdown breakdown;
  GaussianPosterior<T> content;
  GaussianPosterior<T> speaker;
};

// Observes the exact tensors fed to each encoder.
template <typename T>
struct EncoderInputHook {
  std::function<void(const Tensor<T>& content_input,
                     const Tensor<T>& speaker_input)>
      callback;
};

// Generators consumed by one loss evaluation.
struct LossStreams {
  Rng* shuffle = nullptr;  // segment shuffle of the speaker-encoder input
  Rng* dropout = nullptr;
  Rng* reparam = nullptr;  // standard-normal noise for both latents
};

// Weighted objective on explicit encoder inputs. With sample_latents the
// latents are drawn by reparameterization, otherwise posterior means are
// decoded.
template <typename T>
LossResult<T> ComputeLoss(const Model<T>& model, const Tensor<T>& content_input,
                          const Tensor<T>& speaker_input,
                          const LossWeights& weights, bool training,
                          bool sample_latents, const LossStreams& streams);

// Weighted objective on utterance or batch x. In training mode the
// speaker-encoder input is the segment-shuffled x (per batch item), dropout
// is active, and latents are sampled; otherwise the unshuffled x, no
// dropout, and posterior means are used.
template <typename T>
LossResult<T> TotalLoss(const Model<T>& model, const Tensor<T>& x,
                        const LossWeights& weights, bool training,
                        const LossStreams& streams,
                        const EncoderInputHook<T>* hook = nullptr);

// Tab-separated loss-log line (no trailing newline):
// step, total, reconstruction, content_kl, speaker_kl.
std::string FormatLossRecord(int64_t step, const LossBreakdown& loss);

extern template Tensor<float> KlToStandardNormal(const GaussianPosterior<float>&);
extern template Tensor<double> KlToStandardNormal(
    const GaussianPosterior<double>&);

}  // namespace svae

#endif  // SVAE_OBJECTIVE_H_
