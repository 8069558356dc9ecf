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

#include "svae/data.h"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <map>

#include "svae/errors.h"

namespace svae {

char LanguageLabel(Language language) {
  return language == Language::kA ? 'A' : 'B';
}

Language ParseLanguage(const std::string& label) {
  if (label == "A") return Language::kA;
  if (label == "B") return Language::kB;
  throw FormatError("unknown language label '" + label + "' (expected A or B)");
}

std::string SplitName(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split ParseSplit(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw FormatError("unknown split '" + name + "'");
}

void SynthConfig::Validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw ConfigError(std::string("data.") + name + " must be positive, got " +
                        std::to_string(v));
    }
  };
  positive(feature_dim, "feature_dim");
  positive(speaker_factors, "speaker_factors");
  positive(content_factors, "content_factors");
  positive(train_speakers_per_language, "train_speakers_per_language");
  positive(test_speakers_per_language, "test_speakers_per_language");
  positive(utterances_per_speaker, "utterances_per_speaker");
  positive(min_token_frames, "min_token_frames");
  if (valid_speakers_per_language < 0) {
    throw ConfigError("data.valid_speakers_per_language must be >= 0");
  }
  if (!(speaker_decay > 0.0 && speaker_decay <= 1.0)) {
    throw ConfigError("data.speaker_decay must lie in (0, 1]");
  }
  if (speaker_factors + content_factors > feature_dim) {
    throw ConfigError("data.speaker_factors + data.content_factors (" +
                      std::to_string(speaker_factors + content_factors) +
                      ") must not exceed data.feature_dim (" +
                      std::to_string(feature_dim) + ")");
  }
  if (min_frames < 32 || max_frames < min_frames) {
    throw ConfigError("data.min_frames must be >= 32 and <= data.max_frames");
  }
  if (max_token_frames < min_token_frames) {
    throw ConfigError("data.max_token_frames must be >= data.min_token_frames");
  }
  if (codebook_a.count <= 0 || codebook_b.count <= 0 || codebook_a.first < 0 ||
      codebook_b.first < 0) {
    throw ConfigError("token codebooks must be non-empty with non-negative ids");
  }
  const bool overlap =
      codebook_a.first < codebook_b.first + codebook_b.count &&
      codebook_b.first < codebook_a.first + codebook_a.count;
  if (overlap) {
    throw ConfigError("token codebooks of languages A and B overlap");
  }
  if (!(noise_std >= 0.0) || !(content_scale > 0.0) || !(speaker_scale > 0.0)) {
    throw ConfigError("data.noise_std must be >= 0 and the scales positive");
  }
}

std::vector<double> SynthMixing::SpeakerSignature(
    std::span<const double> s) const {
  std::vector<double> out(feature_dim, 0.0);
  for (int d = 0; d < feature_dim; ++d) {
    for (int j = 0; j < speaker_factors; ++j) {
      out[d] += speaker_map[d * speaker_factors + j] * s[j];
    }
  }
  return out;
}

SynthMixing MakeMixing(const SynthConfig& config) {
  config.Validate();
  SynthMixing m;
  m.feature_dim = config.feature_dim;
  m.content_factors = config.content_factors;
  m.speaker_factors = config.speaker_factors;
  const int d = config.feature_dim;
  const int kc = config.content_factors;
  const int ks = config.speaker_factors;

  // Orthonormal columns from the QR factorization of a Gaussian matrix.
  Rng rng(DeriveSeed(config.mixing_seed, "mixing"));
  Eigen::MatrixXd g(d, kc + ks);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < kc + ks; ++c) g(r, c) = rng.Normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, kc + ks);
  m.content_map.resize(d * kc);
  m.speaker_map.resize(d * ks);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < kc; ++c) {
      m.content_map[r * kc + c] = config.content_scale * q(r, c);
    }
    for (int c = 0; c < ks; ++c) {
      m.speaker_map[r * ks + c] = config.speaker_scale *
                                  std::pow(config.speaker_decay, c) *
                                  q(r, kc + c);
    }
  }

  const int tokens =
      std::max(config.codebook_a.first + config.codebook_a.count,
               config.codebook_b.first + config.codebook_b.count);
  m.token_vectors.resize(tokens);
  for (int id = 0; id < tokens; ++id) {
    Rng token_rng(DeriveSeed(config.mixing_seed, "token", id));
    m.token_vectors[id].resize(kc);
    for (double& v : m.token_vectors[id]) v = token_rng.Normal();
  }
  return m;
}

std::vector<double> ContentTrajectory(const SynthMixing& mixing,
                                      std::span<const int> tokens,
                                      std::span<const int> durations,
                                      int64_t frames) {
  const int kc = mixing.content_factors;
  std::vector<double> centers;
  double start = 0.0;
  for (int dur : durations) {
    centers.push_back(start + (dur - 1) / 2.0);
    start += dur;
  }
  std::vector<double> out(frames * kc);
  size_t seg = 0;
  for (int64_t t = 0; t < frames; ++t) {
    const double ft = static_cast<double>(t);
    while (seg + 1 < centers.size() && centers[seg + 1] <= ft) ++seg;
    const auto& v0 = mixing.token_vectors[tokens[seg]];
    double alpha = 0.0;
    const std::vector<double>* v1 = &v0;
    if (ft > centers[seg] && seg + 1 < centers.size()) {
      v1 = &mixing.token_vectors[tokens[seg + 1]];
      alpha = (ft - centers[seg]) / (centers[seg + 1] - centers[seg]);
    }
    for (int j = 0; j < kc; ++j) {
      out[t * kc + j] = (1.0 - alpha) * v0[j] + alpha * (*v1)[j];
    }
  }
  return out;
}

FeatureMatrix RenderFeatures(const SynthMixing& mixing,
                             std::span<const double> content, int64_t frames,
                             std::span<const double> speaker_factor,
                             double noise_std, Rng& noise_rng) {
  const int d = mixing.feature_dim;
  const int kc = mixing.content_factors;
  const std::vector<double> offset = mixing.SpeakerSignature(speaker_factor);
  FeatureMatrix f{frames, d, std::vector<float>(frames * d)};
  for (int64_t t = 0; t < frames; ++t) {
    for (int r = 0; r < d; ++r) {
      double v = offset[r];
      for (int j = 0; j < kc; ++j) {
        v += mixing.content_map[r * kc + j] * content[t * kc + j];
      }
      if (noise_std > 0.0) v += noise_std * noise_rng.Normal();
      f.values[t * d + r] = static_cast<float>(v);
    }
  }
  return f;
}

const std::vector<Utterance>& SynthCorpus::split(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train;
    case Split::kValid:
      return valid;
    case Split::kTest:
      return test;
  }
  return train;
}

const SpeakerInfo& SynthCorpus::speaker(const std::string& id) const {
  for (const SpeakerInfo& s : speakers) {
    if (s.id == id) return s;
  }
  throw ContractError("unknown speaker " + id);
}

namespace {

std::string SpeakerId(Language language, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%03d", LanguageLabel(language), index);
  return buf;
}

}  // namespace

Utterance GenerateUtterance(const SynthConfig& config, const SynthMixing& mixing,
                            const SpeakerInfo& speaker, int speaker_index,
                            int utterance_index, uint64_t seed) {
  Rng rng(DeriveSeed(seed, "utterance", speaker_index, utterance_index));
  const TokenRange& book = speaker.language == Language::kA ? config.codebook_a
                                                            : config.codebook_b;
  const int64_t frames = rng.UniformInt(config.min_frames, config.max_frames);
  Utterance u;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d", speaker.id.c_str(), utterance_index);
  u.id = buf;
  u.speaker_id = speaker.id;
  u.language = speaker.language;
  int64_t covered = 0;
  while (covered < frames) {
    u.truth.tokens.push_back(book.first +
                             static_cast<int>(rng.UniformInt(0, book.count - 1)));
    const int dur = static_cast<int>(
        rng.UniformInt(config.min_token_frames, config.max_token_frames));
    u.truth.durations.push_back(dur);
    covered += dur;
  }
  u.truth.speaker_factor = speaker.factor;
  u.truth.content =
      ContentTrajectory(mixing, u.truth.tokens, u.truth.durations, frames);
  u.features = RenderFeatures(mixing, u.truth.content, frames, speaker.factor,
                              config.noise_std, rng);
  return u;
}

SynthCorpus GenerateSyntheticCorpus(const SynthConfig& config, uint64_t seed) {
  config.Validate();
  SynthCorpus corpus;
  corpus.config = config;
  corpus.mixing = MakeMixing(config);
  const int per_lang = config.SpeakersPerLanguage();
  for (Language lang : {Language::kA, Language::kB}) {
    for (int i = 0; i < per_lang; ++i) {
      SpeakerInfo s;
      s.id = SpeakerId(lang, i);
      s.language = lang;
      if (i < config.train_speakers_per_language) {
        s.split = Split::kTrain;
      } else if (i < config.train_speakers_per_language +
                         config.valid_speakers_per_language) {
        s.split = Split::kValid;
      } else {
        s.split = Split::kTest;
      }
      Rng rng(DeriveSeed(seed, "speaker", static_cast<uint64_t>(lang), i));
      s.factor.resize(config.speaker_factors);
      for (double& v : s.factor) v = rng.Normal();
      s.signature = corpus.mixing.SpeakerSignature(s.factor);
      corpus.speakers.push_back(std::move(s));
    }
  }
  for (size_t si = 0; si < corpus.speakers.size(); ++si) {
    const SpeakerInfo& s = corpus.speakers[si];
    std::vector<Utterance>& dst =
        s.split == Split::kTrain ? corpus.train
                                 : (s.split == Split::kValid ? corpus.valid
                                                             : corpus.test);
    for (int u = 0; u < config.utterances_per_speaker; ++u) {
      dst.push_back(GenerateUtterance(config, corpus.mixing, s,
                                      static_cast<int>(si), u, seed));
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Feature files.

namespace {

constexpr char kFeatureMagic[8] = {'S', 'V', 'A', 'E', 'F', 'E', 'A', 'T'};
constexpr size_t kFeatureHeaderBytes = 20;

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t GetU32(std::string_view bytes, size_t offset) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[offset + i]))
         << (8 * i);
  }
  return v;
}

std::string ReadWholeFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void WriteWholeFile(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

std::string EncodeFeatures(const FeatureMatrix& features) {
  if (features.frames <= 0 || features.dim <= 0) {
    throw FormatError("refusing to write an empty feature matrix [" +
                      std::to_string(features.frames) + ", " +
                      std::to_string(features.dim) + "]");
  }
  if (static_cast<int64_t>(features.values.size()) !=
      features.frames * features.dim) {
    throw DimensionError("feature matrix holds " +
                         std::to_string(features.values.size()) +
                         " values, expected frames * dim");
  }
  std::string out(kFeatureMagic, sizeof(kFeatureMagic));
  PutU32(out, kFeatureFileVersion);
  PutU32(out, static_cast<uint32_t>(features.frames));
  PutU32(out, static_cast<uint32_t>(features.dim));
  out.reserve(out.size() + 4 * features.values.size());
  for (size_t i = 0; i < features.values.size(); ++i) {
    const float v = features.values[i];
    if (!std::isfinite(v)) {
      throw FormatError("non-finite feature value at index " + std::to_string(i));
    }
    PutU32(out, std::bit_cast<uint32_t>(v));
  }
  return out;
}

FeatureMatrix DecodeFeatures(std::string_view bytes) {
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError("truncated feature header: file ends at byte offset " +
                      std::to_string(bytes.size()) + ", header needs " +
                      std::to_string(kFeatureHeaderBytes));
  }
  if (std::memcmp(bytes.data(), kFeatureMagic, sizeof(kFeatureMagic)) != 0) {
    throw FormatError("bad feature-file magic at byte offset 0");
  }
  const uint32_t version = GetU32(bytes, 8);
  if (version != kFeatureFileVersion) {
    throw VersionError("unsupported feature-file version " +
                       std::to_string(version) + " at byte offset 8 (expected " +
                       std::to_string(kFeatureFileVersion) + ")");
  }
  const uint32_t frames = GetU32(bytes, 12);
  const uint32_t dim = GetU32(bytes, 16);
  if (frames == 0 || dim == 0) {
    throw FormatError("empty feature matrix declared at byte offset 12");
  }
  const uint64_t payload = uint64_t{4} * frames * dim;
  if (bytes.size() - kFeatureHeaderBytes < payload) {
    throw FormatError("truncated feature payload: expected " +
                      std::to_string(kFeatureHeaderBytes + payload) +
                      " bytes, file ends at byte offset " +
                      std::to_string(bytes.size()));
  }
  if (bytes.size() - kFeatureHeaderBytes > payload) {
    throw FormatError("trailing bytes after feature payload at byte offset " +
                      std::to_string(kFeatureHeaderBytes + payload));
  }
  FeatureMatrix f{frames, dim, std::vector<float>(uint64_t{frames} * dim)};
  for (size_t i = 0; i < f.values.size(); ++i) {
    const size_t offset = kFeatureHeaderBytes + 4 * i;
    f.values[i] = std::bit_cast<float>(GetU32(bytes, offset));
    if (!std::isfinite(f.values[i])) {
      throw FormatError("non-finite feature value at byte offset " +
                        std::to_string(offset));
    }
  }
  return f;
}

void WriteFeatureFile(const std::filesystem::path& path,
                      const FeatureMatrix& features) {
  WriteWholeFile(path, EncodeFeatures(features));
}

FeatureMatrix ReadFeatureFile(const std::filesystem::path& path) {
  try {
    return DecodeFeatures(ReadWholeFile(path));
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Manifests and speaker tables.

namespace {

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, '\t')) fields.push_back(field);
  return fields;
}

}  // namespace

void WriteManifest(const std::filesystem::path& path,
                   const CorpusManifest& manifest) {
  std::string out;
  for (const ManifestRecord& r : manifest.records) {
    out += r.path + '\t' + r.speaker_id + '\t' + LanguageLabel(r.language) + '\n';
  }
  WriteWholeFile(path, out);
}

CorpusManifest ReadManifest(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  CorpusManifest m;
  m.split = split;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    if (fields.size() != 3) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 3 tab-separated fields, got " +
                        std::to_string(fields.size()));
    }
    try {
      m.records.push_back({fields[0], fields[1], ParseLanguage(fields[2])});
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return m;
}

void CheckSpeakerDisjoint(std::span<const CorpusManifest> manifests) {
  std::map<std::string, Split> owner;
  for (const CorpusManifest& m : manifests) {
    for (const ManifestRecord& r : m.records) {
      auto [it, inserted] = owner.emplace(r.speaker_id, m.split);
      if (!inserted && it->second != m.split) {
        throw ValidationError("speaker " + r.speaker_id + " appears in both " +
                              SplitName(it->second) + " and " +
                              SplitName(m.split) + " splits");
      }
    }
  }
}

std::vector<Utterance> LoadUtterances(const CorpusManifest& manifest,
                                      const std::filesystem::path& base_dir) {
  std::vector<Utterance> out;
  out.reserve(manifest.records.size());
  for (const ManifestRecord& r : manifest.records) {
    std::filesystem::path p(r.path);
    if (p.is_relative()) p = base_dir / p;
    Utterance u;
    u.id = p.stem().string();
    u.speaker_id = r.speaker_id;
    u.language = r.language;
    u.features = ReadFeatureFile(p);
    out.push_back(std::move(u));
  }
  return out;
}

void WriteSpeakerTable(const std::filesystem::path& path,
                       std::span<const SpeakerInfo> speakers) {
  std::string out;
  char buf[64];
  for (const SpeakerInfo& s : speakers) {
    out += s.id + '\t' + LanguageLabel(s.language) + '\t' + SplitName(s.split) +
           '\t';
    for (size_t i = 0; i < s.signature.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s%.17g", i ? "," : "", s.signature[i]);
      out += buf;
    }
    out += '\n';
  }
  WriteWholeFile(path, out);
}

std::vector<SpeakerInfo> ReadSpeakerTable(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open speaker table " + path.string());
  std::vector<SpeakerInfo> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    if (fields.size() != 4) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 4 tab-separated fields");
    }
    SpeakerInfo s;
    s.id = fields[0];
    s.language = ParseLanguage(fields[1]);
    s.split = ParseSplit(fields[2]);
    std::istringstream vs(fields[3]);
    std::string item;
    while (std::getline(vs, item, ',')) s.signature.push_back(std::stod(item));
    out.push_back(std::move(s));
  }
  return out;
}

CorpusSummary WriteCorpus(const SynthCorpus& corpus,
                          const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "features");
  CorpusSummary summary;
  summary.speakers = static_cast<int64_t>(corpus.speakers.size());
  for (Split split : {Split::kTrain, Split::kValid, Split::kTest}) {
    CorpusManifest manifest;
    manifest.split = split;
    for (const Utterance& u : corpus.split(split)) {
      const fs::path rel = fs::path("features") / u.speaker_id / (u.id + ".svf");
      fs::create_directories(out_dir / rel.parent_path());
      WriteFeatureFile(out_dir / rel, u.features);
      manifest.records.push_back({rel.generic_string(), u.speaker_id, u.language});
      ++summary.utterances;
      summary.frames += u.features.frames;
    }
    WriteManifest(out_dir / ("manifest_" + SplitName(split) + ".tsv"), manifest);
  }
  WriteSpeakerTable(out_dir / "speakers.tsv", corpus.speakers);
  return summary;
}

// ---------------------------------------------------------------------------
// Augmentation and batching.

template <typename T>
std::vector<T> SegmentShuffle(std::span<const T> x, int64_t frames,
                              int64_t dim, Rng& rng) {
  if (frames < kMinShuffleSegment) {
    throw LengthError("segment shuffle needs at least " +
                      std::to_string(kMinShuffleSegment) + " frames, got " +
                      std::to_string(frames));
  }
  if (static_cast<int64_t>(x.size()) != frames * dim) {
    throw DimensionError("segment shuffle: buffer size does not match [" +
                         std::to_string(frames) + ", " + std::to_string(dim) +
                         "]");
  }
  std::vector<std::pair<int64_t, int64_t>> segments;  // (start, length)
  int64_t start = 0;
  while (start < frames) {
    const int64_t len = std::min(
        rng.UniformInt(kMinShuffleSegment, kMaxShuffleSegment), frames - start);
    segments.emplace_back(start, len);
    start += len;
  }
  rng.Shuffle(segments.begin(), segments.end());
  std::vector<T> out;
  out.reserve(x.size());
  for (const auto& [s, len] : segments) {
    out.insert(out.end(), x.begin() + s * dim, x.begin() + (s + len) * dim);
  }
  return out;
}

template std::vector<float> SegmentShuffle<float>(std::span<const float>,
                                                  int64_t, int64_t, Rng&);
template std::vector<double> SegmentShuffle<double>(std::span<const double>,
                                                    int64_t, int64_t, Rng&);

TensorF MakeBatch(std::span<const Utterance* const> utterances,
                  int64_t crop_len, Rng& rng) {
  if (utterances.empty()) throw LengthError("cannot build an empty batch");
  if (crop_len <= 0) throw ConfigError("crop length must be positive");
  const int64_t dim = utterances.front()->features.dim;
  std::vector<float> values;
  values.reserve(utterances.size() * crop_len * dim);
  for (const Utterance* u : utterances) {
    if (u->features.frames < crop_len) {
      throw LengthError("utterance " + u->id + " has " +
                        std::to_string(u->features.frames) +
                        " frames, shorter than crop length " +
                        std::to_string(crop_len));
    }
    if (u->features.dim != dim) {
      throw DimensionError("utterance " + u->id + " has feature dim " +
                           std::to_string(u->features.dim) + ", expected " +
                           std::to_string(dim));
    }
    const int64_t offset = rng.UniformInt(0, u->features.frames - crop_len);
    const auto begin = u->features.values.begin() + offset * dim;
    values.insert(values.end(), begin, begin + crop_len * dim);
  }
  return TensorF::FromVector(
      {static_cast<int64_t>(utterances.size()), crop_len, dim},
      std::move(values));
}

}  // namespace svae
