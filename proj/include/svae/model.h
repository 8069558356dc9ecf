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

#ifndef SVAE_MODEL_H_
#define SVAE_MODEL_H_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "svae/ops.h"
#include "svae/rng.h"
#include "svae/tensor.h"

namespace svae {

struct ModelConfig {
  int feature_dim = 80;
  int hidden_dim = 256;
  int content_dim = 128;
  int speaker_dim = 128;
  int attention_heads = 4;
  int ffn_dim = 1024;
  int attention_blocks = 2;
  int content_kernel = 3;
  // One entry per down-sampling block of the speaker encoder.
  std::vector<int> speaker_kernels = {3, 3, 5, 5};
  int postnet_layers = 5;
  int postnet_kernel = 5;
  double content_dropout = 0.2;
  double decoder_dropout = 0.2;
  double postnet_dropout = 0.2;
  bool positional_encoding = true;

  static ModelConfig PaperDims();
  static ModelConfig Tiny();

  // Throws ConfigError on non-positive extents, even kernels, invalid
  // dropout rates, or a hidden width not divisible by the head count.
  void Validate() const;

  // Shortest input the speaker encoder accepts (one halving per block).
  int64_t MinSpeakerFrames() const {
    return int64_t{1} << speaker_kernels.size();
  }

  bool operator==(const ModelConfig&) const = default;
};

// Diagonal Gaussian. Vector form [D] / [B, D] for the speaker posterior,
// sequence form [T, D] / [B, T, D] for the content posterior.
template <typename T>
struct GaussianPosterior {
  Tensor<T> mean;
  Tensor<T> log_variance;
};

template <typename T>
struct DecoderOutput {
  Tensor<T> pre_out;
  Tensor<T> post_out;
};

// Named parameters in registration order. The name set depends only on the
// model configuration.
template <typename T>
class ParamStore {
 public:
  Tensor<T> Register(const std::string& name, Tensor<T> tensor);

  const Tensor<T>& Get(const std::string& name) const;
  Tensor<T>& Get(const std::string& name);
  bool Contains(const std::string& name) const {
    return index_.count(name) > 0;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const {
    return entries_;
  }
  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }

  int64_t TotalElements() const;
  void ZeroGrad();
  void Fill(T value);
  bool AllFinite() const;

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, size_t> index_;
};

struct ForwardOptions {
  bool training = false;
  // Required when training with non-zero dropout rates.
  Rng* dropout_rng = nullptr;
  ops::AttentionMask attention_mask = ops::AttentionMask::kFull;
};

// Sinusoidal position table of shape [frames, channels].
template <typename T>
Tensor<T> SinusoidalPositions(int64_t frames, int64_t channels);

// Speaker encoder, content encoder, and decoder with PostNet. Inputs are
// single utterances [T, D_x] or uniform-length batches [B, T, D_x].
template <typename T>
class Model {
 public:
  // Parameters drawn from the kInit stream of `seed`.
  Model(const ModelConfig& config, uint64_t seed);
  // Layers and the parameter store share tensor nodes, so copies would
  // alias parameters.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  // FC + ReLU, down-sampling residual conv blocks, global average pooling,
  // FC to mean and log-variance of size D_s.
  GaussianPosterior<T> EncodeSpeaker(const Tensor<T>& x,
                                     const ForwardOptions& options) const;
  // Two conv layers with dropout, positional encoding, self-attention
  // blocks, and a per-frame projection to mean and log-variance of size D_c.
  GaussianPosterior<T> EncodeContent(const Tensor<T>& x,
                                     const ForwardOptions& options) const;
  // Tiles z_s over time, concatenates with z_c, runs the conv and attention
  // stack and the output layer (pre_out), then adds the PostNet residual
  // (post_out).
  DecoderOutput<T> Decode(const Tensor<T>& z_c, const Tensor<T>& z_s,
                          const ForwardOptions& options) const;

  // Deterministic conversion: content posterior mean of `source` decoded
  // with the speaker posterior mean of `target`. Returns post_out with the
  // source frame count.
  Tensor<T> Convert(const Tensor<T>& source, const Tensor<T>& target) const;

  // Mean-only autoencoding of x; equal to Convert(x, x).
  Tensor<T> Reconstruct(const Tensor<T>& x) const { return Convert(x, x); }

  // First content conv layer (pre-dropout activations), exposed for
  // receptive-field tests.
  Tensor<T> ContentFirstConv(const Tensor<T>& x) const;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

 private:
  struct Linear {
    Tensor<T> weight;
    Tensor<T> bias;
  };
  struct Conv {
    Tensor<T> kernel;
    Tensor<T> bias;
  };
  struct Norm {
    Tensor<T> gain;
    Tensor<T> bias;
  };
  struct AttentionBlock {
    Norm attention_norm;
    Linear query, key, value, output;
    Norm ffn_norm;
    Linear ffn_in, ffn_out;
  };
  struct ResidualBlock {
    Conv first, second;
  };

  Linear MakeLinear(const std::string& name, int in, int out, Rng& rng);
  Conv MakeConv(const std::string& name, int kernel, int in, int out, Rng& rng);
  Norm MakeNorm(const std::string& name, int width);
  AttentionBlock MakeAttentionBlock(const std::string& name, Rng& rng);

  Tensor<T> ApplyLinear(const Tensor<T>& x, const Linear& l) const {
    return ops::Affine(x, l.weight, l.bias);
  }
  Tensor<T> ApplyConv(const Tensor<T>& x, const Conv& c) const {
    return ops::Conv1dSame(x, c.kernel, c.bias);
  }
  Tensor<T> ApplyNorm(const Tensor<T>& x, const Norm& n) const {
    return ops::LayerNorm(x, n.gain, n.bias);
  }
  Tensor<T> ApplyAttentionBlock(const Tensor<T>& x, const AttentionBlock& b,
                                const ForwardOptions& options) const;
  Tensor<T> MaybeDropout(const Tensor<T>& x, double rate,
                         const ForwardOptions& options) const;
  Tensor<T> AddPositions(const Tensor<T>& x) const;
  GaussianPosterior<T> SplitPosterior(const Tensor<T>& projected,
                                      int dim) const;
  void CheckFeatureInput(const Tensor<T>& x, const char* who) const;

  ModelConfig config_;
  ParamStore<T> params_;

  Linear spk_input_;
  std::vector<ResidualBlock> spk_blocks_;
  Linear spk_output_;

  Conv content_conv1_, content_conv2_;
  std::vector<AttentionBlock> content_blocks_;
  Norm content_final_norm_;
  Linear content_output_;

  Conv dec_conv1_, dec_conv2_;
  std::vector<AttentionBlock> dec_blocks_;
  Norm dec_final_norm_;
  Linear dec_output_;
  std::vector<Conv> postnet_;
};

// Copies parameter values into a model of another precision.
template <typename To, typename From>
Model<To> CastModel(const Model<From>& model) {
  Model<To> out(model.config(), 0);
  for (auto& [name, tensor] : out.params().entries()) {
    const auto src = model.params().Get(name).values();
    auto dst = tensor.mutable_values();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<To>(src[i]);
  }
  return out;
}

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Model<float>;
extern template class Model<double>;

}  // namespace svae

#endif  // SVAE_MODEL_H_
