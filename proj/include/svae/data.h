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

#ifndef SVAE_DATA_H_
#define SVAE_DATA_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "svae/rng.h"
#include "svae/tensor.h"

namespace svae {

// Row-major [frames, dim] feature matrix.
struct FeatureMatrix {
  int64_t frames = 0;
  int64_t dim = 0;
  std::vector<float> values;

  float at(int64_t t, int64_t d) const { return values[t * dim + d]; }
  std::span<const float> frame(int64_t t) const {
    return {values.data() + t * dim, static_cast<size_t>(dim)};
  }
  // [frames, dim] leaf tensor holding a copy of the values.
  template <typename T>
  Tensor<T> ToTensor() const {
    return Tensor<T>::FromVector(
        {frames, dim}, std::vector<T>(values.begin(), values.end()));
  }
  bool operator==(const FeatureMatrix&) const = default;
};

enum class Language { kA, kB };
enum class Split { kTrain, kValid, kTest };

char LanguageLabel(Language language);
Language ParseLanguage(const std::string& label);
std::string SplitName(Split split);
Split ParseSplit(const std::string& name);

// Ground-truth factors of a synthetic utterance.
struct SynthTruth {
  std::vector<double> speaker_factor;  // [k_s]
  std::vector<double> content;         // [T, k_c] row-major
  std::vector<int> tokens;
  std::vector<int> durations;
};

struct Utterance {
  std::string id;
  std::string speaker_id;
  Language language = Language::kA;
  FeatureMatrix features;
  SynthTruth truth;
};

struct TokenRange {
  int first = 0;
  int count = 0;
  bool operator==(const TokenRange&) const = default;
};

struct SynthConfig {
  int feature_dim = 16;
  int speaker_factors = 4;
  int content_factors = 4;
  int train_speakers_per_language = 20;
  int valid_speakers_per_language = 2;
  int test_speakers_per_language = 8;
  int utterances_per_speaker = 20;
  int min_frames = 64;
  int max_frames = 128;
  int min_token_frames = 8;
  int max_token_frames = 24;
  TokenRange codebook_a{0, 12};
  TokenRange codebook_b{12, 12};
  double content_scale = 1.0;
  double speaker_scale = 1.0;
  // Amplitude ratio between consecutive speaker factors; factor j has
  // amplitude speaker_scale * speaker_decay^j.
  double speaker_decay = 1.0;
  double noise_std = 0.0;
  uint64_t mixing_seed = 7;

  int SpeakersPerLanguage() const {
    return train_speakers_per_language + valid_speakers_per_language +
           test_speakers_per_language;
  }
  // Throws ConfigError; in particular when the two codebooks overlap.
  void Validate() const;
  bool operator==(const SynthConfig&) const = default;
};

// Fixed linear generative model shared by all speakers:
// x_t = content_map * c_t + speaker_map * s + noise.
struct SynthMixing {
  int feature_dim = 0;
  int content_factors = 0;
  int speaker_factors = 0;
  std::vector<double> content_map;  // [D, k_c] row-major
  std::vector<double> speaker_map;  // [D, k_s] row-major
  // Content vector per token id, [k_c] each, indexed by token id.
  std::vector<std::vector<double>> token_vectors;

  // speaker_map * s.
  std::vector<double> SpeakerSignature(std::span<const double> s) const;
};

SynthMixing MakeMixing(const SynthConfig& config);

// Piecewise-linear content trajectory through the token vectors, anchored at
// the center frame of each token and held constant before the first and
// after the last center. Returns [frames, k_c].
std::vector<double> ContentTrajectory(const SynthMixing& mixing,
                                      std::span<const int> tokens,
                                      std::span<const int> durations,
                                      int64_t frames);

// Renders x_t = A c_t + B s + noise_std * eta_t for the given factors.
FeatureMatrix RenderFeatures(const SynthMixing& mixing,
                             std::span<const double> content, int64_t frames,
                             std::span<const double> speaker_factor,
                             double noise_std, Rng& noise_rng);

struct SpeakerInfo {
  std::string id;
  Language language = Language::kA;
  Split split = Split::kTrain;
  std::vector<double> factor;     // s
  std::vector<double> signature;  // B s
};

struct SynthCorpus {
  SynthConfig config;
  SynthMixing mixing;
  std::vector<SpeakerInfo> speakers;
  std::vector<Utterance> train;
  std::vector<Utterance> valid;
  std::vector<Utterance> test;

  const std::vector<Utterance>& split(Split s) const;
  const SpeakerInfo& speaker(const std::string& id) const;
};

// Independent speaker factors s ~ N(0, I) and token sequences drawn from the
// speaker's language codebook. Every utterance draws from its own stream
// keyed by (seed, speaker, utterance index).
SynthCorpus GenerateSyntheticCorpus(const SynthConfig& config, uint64_t seed);

// Generates one utterance; GenerateSyntheticCorpus calls this per utterance.
Utterance GenerateUtterance(const SynthConfig& config, const SynthMixing& mixing,
                            const SpeakerInfo& speaker, int speaker_index,
                            int utterance_index, uint64_t seed);

// Feature files: "SVAEFEAT", u32 version, u32 frames, u32 dim, then
// frames * dim IEEE-754 binary32 values, all little-endian, row-major.
inline constexpr uint32_t kFeatureFileVersion = 1;
void WriteFeatureFile(const std::filesystem::path& path,
                      const FeatureMatrix& features);
FeatureMatrix ReadFeatureFile(const std::filesystem::path& path);
std::string EncodeFeatures(const FeatureMatrix& features);
FeatureMatrix DecodeFeatures(std::string_view bytes);

struct ManifestRecord {
  std::string path;
  std::string speaker_id;
  Language language = Language::kA;
};

struct CorpusManifest {
  Split split = Split::kTrain;
  std::vector<ManifestRecord> records;
};

// One UTF-8 line per record: path<TAB>speaker<TAB>language.
void WriteManifest(const std::filesystem::path& path,
                   const CorpusManifest& manifest);
CorpusManifest ReadManifest(const std::filesystem::path& path, Split split);

// Throws ValidationError when a speaker appears in more than one split.
void CheckSpeakerDisjoint(std::span<const CorpusManifest> manifests);

// Loads every utterance of a manifest; relative paths resolve against
// `base_dir`.
std::vector<Utterance> LoadUtterances(const CorpusManifest& manifest,
                                      const std::filesystem::path& base_dir);

// Speaker table: id<TAB>language<TAB>split<TAB>comma-separated signature.
void WriteSpeakerTable(const std::filesystem::path& path,
                       std::span<const SpeakerInfo> speakers);
std::vector<SpeakerInfo> ReadSpeakerTable(const std::filesystem::path& path);

struct CorpusSummary {
  int64_t speakers = 0;
  int64_t utterances = 0;
  int64_t frames = 0;
};

// Writes features under out_dir/features/, manifest_{train,valid,test}.tsv
// and speakers.tsv.
CorpusSummary WriteCorpus(const SynthCorpus& corpus,
                          const std::filesystem::path& out_dir);

inline constexpr int64_t kMinShuffleSegment = 8;
inline constexpr int64_t kMaxShuffleSegment = 32;

// Splits [frames, dim] into contiguous segments of uniform length in
// [8, 32] (the last one takes the remainder) and permutes their order.
template <typename T>
std::vector<T> SegmentShuffle(std::span<const T> x, int64_t frames,
                              int64_t dim, Rng& rng);

// Uniform-random crop of crop_len frames from every utterance, stacked into
// [B, crop_len, D].
TensorF MakeBatch(std::span<const Utterance* const> utterances,
                  int64_t crop_len, Rng& rng);

}  // namespace svae

#endif  // SVAE_DATA_H_
