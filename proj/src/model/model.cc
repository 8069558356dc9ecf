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

#include "svae/model.h"

#include <cmath>
#include <string>

#include "svae/errors.h"

namespace svae {

ModelConfig ModelConfig::PaperDims() { return ModelConfig{}; }

ModelConfig ModelConfig::Tiny() {
  ModelConfig c;
  c.feature_dim = 16;
  c.hidden_dim = 32;
  c.content_dim = 8;
  c.speaker_dim = 8;
  c.attention_heads = 2;
  c.ffn_dim = 64;
  return c;
}

void ModelConfig::Validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw ConfigError(std::string("model.") + name +
                        " must be positive, got " + std::to_string(v));
    }
  };
  positive(feature_dim, "feature_dim");
  positive(hidden_dim, "hidden_dim");
  positive(content_dim, "content_dim");
  positive(speaker_dim, "speaker_dim");
  positive(attention_heads, "attention_heads");
  positive(ffn_dim, "ffn_dim");
  positive(attention_blocks, "attention_blocks");
  positive(postnet_layers, "postnet_layers");
  if (hidden_dim % attention_heads != 0) {
    throw ConfigError("model.hidden_dim (" + std::to_string(hidden_dim) +
                      ") must be divisible by model.attention_heads (" +
                      std::to_string(attention_heads) + ")");
  }
  if (speaker_kernels.empty()) {
    throw ConfigError("model.speaker_kernels must not be empty");
  }
  for (int k : speaker_kernels) {
    if (k <= 0 || k % 2 == 0) {
      throw ConfigError("model.speaker_kernels entries must be odd and "
                        "positive, got " + std::to_string(k));
    }
  }
  if (content_kernel <= 0 || content_kernel % 2 == 0) {
    throw ConfigError("model.content_kernel must be odd and positive");
  }
  if (postnet_kernel <= 0 || postnet_kernel % 2 == 0) {
    throw ConfigError("model.postnet_kernel must be odd and positive");
  }
  for (double r : {content_dropout, decoder_dropout, postnet_dropout}) {
    if (!(r >= 0.0 && r < 1.0)) {
      throw ConfigError("dropout rates must lie in [0, 1), got " +
                        std::to_string(r));
    }
  }
}

template <typename T>
Tensor<T> ParamStore<T>::Register(const std::string& name, Tensor<T> tensor) {
  if (index_.count(name)) {
    throw ContractError("duplicate parameter name " + name);
  }
  tensor.set_requires_grad(true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, tensor);
  return tensor;
}

template <typename T>
const Tensor<T>& ParamStore<T>::Get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].second;
}

template <typename T>
Tensor<T>& ParamStore<T>::Get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].second;
}

template <typename T>
int64_t ParamStore<T>::TotalElements() const {
  int64_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

template <typename T>
void ParamStore<T>::ZeroGrad() {
  for (auto& [name, t] : entries_) t.ZeroGrad();
}

template <typename T>
void ParamStore<T>::Fill(T value) {
  for (auto& [name, t] : entries_) {
    for (T& v : t.mutable_values()) v = value;
  }
}

template <typename T>
bool ParamStore<T>::AllFinite() const {
  for (const auto& [name, t] : entries_) {
    for (T v : t.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

template <typename T>
Tensor<T> SinusoidalPositions(int64_t frames, int64_t channels) {
  std::vector<T> table(frames * channels);
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t c = 0; c < channels; ++c) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (c / 2)) /
                                static_cast<double>(channels));
      const double angle = static_cast<double>(t) * rate;
      table[t * channels + c] =
          static_cast<T>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor<T>::FromVector({frames, channels}, std::move(table));
}

namespace {

// Xavier-uniform weights.
template <typename T>
Tensor<T> XavierUniform(Shape shape, int64_t fan_in, int64_t fan_out,
                        Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> values(NumElements(shape));
  for (T& v : values) v = static_cast<T>((2.0 * rng.Uniform() - 1.0) * limit);
  return Tensor<T>::FromVector(std::move(shape), std::move(values));
}

}  // namespace

template <typename T>
typename Model<T>::Linear Model<T>::MakeLinear(const std::string& name, int in,
                                               int out, Rng& rng) {
  Linear l;
  l.weight = params_.Register(name + ".weight",
                              XavierUniform<T>({in, out}, in, out, rng));
  l.bias = params_.Register(name + ".bias", Tensor<T>::Zeros({out}));
  return l;
}

template <typename T>
typename Model<T>::Conv Model<T>::MakeConv(const std::string& name, int kernel,
                                           int in, int out, Rng& rng) {
  Conv c;
  c.kernel = params_.Register(
      name + ".kernel",
      XavierUniform<T>({kernel, in, out}, kernel * in, kernel * out, rng));
  c.bias = params_.Register(name + ".bias", Tensor<T>::Zeros({out}));
  return c;
}

template <typename T>
typename Model<T>::Norm Model<T>::MakeNorm(const std::string& name, int width) {
  Norm n;
  n.gain = params_.Register(name + ".gain", Tensor<T>::Full({width}, T(1)));
  n.bias = params_.Register(name + ".bias", Tensor<T>::Zeros({width}));
  return n;
}

template <typename T>
typename Model<T>::AttentionBlock Model<T>::MakeAttentionBlock(
    const std::string& name, Rng& rng) {
  const int h = config_.hidden_dim;
  AttentionBlock b;
  b.attention_norm = MakeNorm(name + ".attention_norm", h);
  b.query = MakeLinear(name + ".query", h, h, rng);
  b.key = MakeLinear(name + ".key", h, h, rng);
  b.value = MakeLinear(name + ".value", h, h, rng);
  b.output = MakeLinear(name + ".output", h, h, rng);
  b.ffn_norm = MakeNorm(name + ".ffn_norm", h);
  b.ffn_in = MakeLinear(name + ".ffn_in", h, config_.ffn_dim, rng);
  b.ffn_out = MakeLinear(name + ".ffn_out", config_.ffn_dim, h, rng);
  return b;
}

template <typename T>
Model<T>::Model(const ModelConfig& config, uint64_t seed) : config_(config) {
  config_.Validate();
  Rng rng = MakeStream(seed, Stream::kInit);
  const int dx = config_.feature_dim;
  const int h = config_.hidden_dim;

  spk_input_ = MakeLinear("speaker_encoder.input", dx, h, rng);
  for (size_t i = 0; i < config_.speaker_kernels.size(); ++i) {
    const std::string name = "speaker_encoder.block" + std::to_string(i);
    const int k = config_.speaker_kernels[i];
    spk_blocks_.push_back({MakeConv(name + ".conv1", k, h, h, rng),
                           MakeConv(name + ".conv2", k, h, h, rng)});
  }
  spk_output_ =
      MakeLinear("speaker_encoder.output", h, 2 * config_.speaker_dim, rng);

  const int kc = config_.content_kernel;
  content_conv1_ = MakeConv("content_encoder.conv1", kc, dx, h, rng);
  content_conv2_ = MakeConv("content_encoder.conv2", kc, h, h, rng);
  for (int i = 0; i < config_.attention_blocks; ++i) {
    content_blocks_.push_back(MakeAttentionBlock(
        "content_encoder.attention" + std::to_string(i), rng));
  }
  content_final_norm_ = MakeNorm("content_encoder.final_norm", h);
  content_output_ =
      MakeLinear("content_encoder.output", h, 2 * config_.content_dim, rng);

  const int zin = config_.content_dim + config_.speaker_dim;
  dec_conv1_ = MakeConv("decoder.conv1", kc, zin, h, rng);
  dec_conv2_ = MakeConv("decoder.conv2", kc, h, h, rng);
  for (int i = 0; i < config_.attention_blocks; ++i) {
    dec_blocks_.push_back(
        MakeAttentionBlock("decoder.attention" + std::to_string(i), rng));
  }
  dec_final_norm_ = MakeNorm("decoder.final_norm", h);
  dec_output_ = MakeLinear("decoder.output", h, dx, rng);
  for (int i = 0; i < config_.postnet_layers; ++i) {
    const int in = i == 0 ? dx : h;
    const int out = i + 1 == config_.postnet_layers ? dx : h;
    postnet_.push_back(MakeConv("decoder.postnet.conv" + std::to_string(i),
                                config_.postnet_kernel, in, out, rng));
  }
}

template <typename T>
void Model<T>::CheckFeatureInput(const Tensor<T>& x, const char* who) const {
  if ((x.rank() != 2 && x.rank() != 3) || x.dim(-1) != config_.feature_dim) {
    throw DimensionError(std::string(who) + " expects [T, " +
                         std::to_string(config_.feature_dim) + "] or [B, T, " +
                         std::to_string(config_.feature_dim) + "], got " +
                         ShapeString(x.shape()));
  }
}

template <typename T>
Tensor<T> Model<T>::MaybeDropout(const Tensor<T>& x, double rate,
                                 const ForwardOptions& options) const {
  if (!options.training || rate == 0.0) return x;
  if (!options.dropout_rng) {
    throw ContractError("training forward pass needs a dropout generator");
  }
  return ops::Dropout(x, rate, true, *options.dropout_rng);
}

template <typename T>
Tensor<T> Model<T>::AddPositions(const Tensor<T>& x) const {
  if (!config_.positional_encoding) return x;
  return ops::Add(x, SinusoidalPositions<T>(x.dim(-2), x.dim(-1)));
}

template <typename T>
GaussianPosterior<T> Model<T>::SplitPosterior(const Tensor<T>& projected,
                                              int dim) const {
  return {ops::SliceLastDim(projected, 0, dim),
          ops::SliceLastDim(projected, dim, dim)};
}

template <typename T>
Tensor<T> Model<T>::ApplyAttentionBlock(const Tensor<T>& x,
                                        const AttentionBlock& b,
                                        const ForwardOptions& options) const {
  Tensor<T> a = ApplyNorm(x, b.attention_norm);
  Tensor<T> attended = ops::MultiHeadAttention(
      ApplyLinear(a, b.query), ApplyLinear(a, b.key), ApplyLinear(a, b.value),
      config_.attention_heads, options.attention_mask);
  Tensor<T> h = ops::Add(x, ApplyLinear(attended, b.output));
  Tensor<T> f = ApplyNorm(h, b.ffn_norm);
  f = ApplyLinear(ops::Relu(ApplyLinear(f, b.ffn_in)), b.ffn_out);
  return ops::Add(h, f);
}

template <typename T>
GaussianPosterior<T> Model<T>::EncodeSpeaker(
    const Tensor<T>& x, const ForwardOptions& /*options*/) const {
  CheckFeatureInput(x, "speaker encoder");
  const int64_t min_frames = config_.MinSpeakerFrames();
  if (x.dim(-2) < min_frames) {
    throw LengthError("speaker encoder needs at least " +
                      std::to_string(min_frames) + " frames, got " +
                      std::to_string(x.dim(-2)));
  }
  Tensor<T> h = ops::Relu(ApplyLinear(x, spk_input_));
  for (const ResidualBlock& block : spk_blocks_) {
    Tensor<T> a = ops::Relu(ApplyConv(h, block.first));
    a = ops::AvgPoolTime(ops::Relu(ApplyConv(a, block.second)), 2);
    h = ops::Add(a, ops::AvgPoolTime(h, 2));
  }
  Tensor<T> pooled = ops::GlobalAvgPoolTime(h);
  return SplitPosterior(ApplyLinear(pooled, spk_output_), config_.speaker_dim);
}

template <typename T>
Tensor<T> Model<T>::ContentFirstConv(const Tensor<T>& x) const {
  CheckFeatureInput(x, "content encoder");
  return ops::Relu(ApplyConv(x, content_conv1_));
}

template <typename T>
GaussianPosterior<T> Model<T>::EncodeContent(
    const Tensor<T>& x, const ForwardOptions& options) const {
  CheckFeatureInput(x, "content encoder");
  const double rate = config_.content_dropout;
  Tensor<T> h = MaybeDropout(ContentFirstConv(x), rate, options);
  h = MaybeDropout(ops::Relu(ApplyConv(h, content_conv2_)), rate, options);
  h = AddPositions(h);
  for (const AttentionBlock& block : content_blocks_) {
    h = ApplyAttentionBlock(h, block, options);
  }
  h = ApplyNorm(h, content_final_norm_);
  return SplitPosterior(ApplyLinear(h, content_output_), config_.content_dim);
}

template <typename T>
DecoderOutput<T> Model<T>::Decode(const Tensor<T>& z_c, const Tensor<T>& z_s,
                                  const ForwardOptions& options) const {
  const bool batched = z_c.rank() == 3;
  if ((z_c.rank() != 2 && !batched) || z_c.dim(-1) != config_.content_dim ||
      z_s.rank() != (batched ? 2 : 1) || z_s.dim(-1) != config_.speaker_dim ||
      (batched && z_s.dim(0) != z_c.dim(0))) {
    throw DimensionError("decoder: z_c " + ShapeString(z_c.shape()) +
                         ", z_s " + ShapeString(z_s.shape()));
  }
  const double rate = config_.decoder_dropout;
  Tensor<T> joint = ops::ConcatChannels(z_c, ops::TileTime(z_s, z_c.dim(-2)));
  Tensor<T> h = MaybeDropout(ops::Relu(ApplyConv(joint, dec_conv1_)), rate,
                             options);
  h = MaybeDropout(ops::Relu(ApplyConv(h, dec_conv2_)), rate, options);
  h = AddPositions(h);
  for (const AttentionBlock& block : dec_blocks_) {
    h = ApplyAttentionBlock(h, block, options);
  }
  h = ApplyNorm(h, dec_final_norm_);
  Tensor<T> pre = ApplyLinear(h, dec_output_);

  // PostNet: tanh on all but the last layer, which is linear.
  Tensor<T> r = pre;
  for (size_t i = 0; i < postnet_.size(); ++i) {
    r = ApplyConv(r, postnet_[i]);
    if (i + 1 < postnet_.size()) {
      r = MaybeDropout(ops::Tanh(r), config_.postnet_dropout, options);
    }
  }
  return {pre, ops::Add(pre, r)};
}

template <typename T>
Tensor<T> Model<T>::Convert(const Tensor<T>& source,
                            const Tensor<T>& target) const {
  NoGradGuard no_grad;
  const ForwardOptions inference;
  GaussianPosterior<T> content = EncodeContent(source, inference);
  GaussianPosterior<T> speaker = EncodeSpeaker(target, inference);
  if (source.rank() != target.rank()) {
    throw DimensionError("convert: source " + ShapeString(source.shape()) +
                         " and target " + ShapeString(target.shape()) +
                         " must have the same rank");
  }
  return Decode(content.mean, speaker.mean, inference).post_out;
}

template Tensor<float> SinusoidalPositions<float>(int64_t, int64_t);
template Tensor<double> SinusoidalPositions<double>(int64_t, int64_t);
template class ParamStore<float>;
template class ParamStore<double>;
template class Model<float>;
template class Model<double>;

}  // namespace svae
