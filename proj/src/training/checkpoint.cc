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

#include "svae/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "svae/errors.h"

namespace svae {

namespace {

constexpr std::string_view kMagic = "SVAECKPT";

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void PutU64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void PutFloats(std::string& out, std::span<const float> values) {
  for (float f : values) PutU32(out, std::bit_cast<uint32_t>(f));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view Take(size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_) +
                        " while reading " + what);
    }
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  uint64_t Uint(int width, const char* what) {
    std::string_view b = Take(width, what);
    uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    }
    return v;
  }
  void Floats(std::span<float> out, const char* what) {
    std::string_view b = Take(out.size() * 4, what);
    for (size_t k = 0; k < out.size(); ++k) {
      uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) {
        bits |= static_cast<uint32_t>(static_cast<unsigned char>(b[4 * k + i]))
                << (8 * i);
      }
      out[k] = std::bit_cast<float>(bits);
    }
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

}  // namespace

nlohmann::ordered_json ModelConfigToJson(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim},
          {"hidden_dim", c.hidden_dim},
          {"content_dim", c.content_dim},
          {"speaker_dim", c.speaker_dim},
          {"attention_heads", c.attention_heads},
          {"ffn_dim", c.ffn_dim},
          {"attention_blocks", c.attention_blocks},
          {"content_kernel", c.content_kernel},
          {"speaker_kernels", c.speaker_kernels},
          {"postnet_layers", c.postnet_layers},
          {"postnet_kernel", c.postnet_kernel},
          {"content_dropout", c.content_dropout},
          {"decoder_dropout", c.decoder_dropout},
          {"postnet_dropout", c.postnet_dropout},
          {"positional_encoding", c.positional_encoding}};
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j) {
  ModelConfig c;
  try {
    j.at("feature_dim").get_to(c.feature_dim);
    j.at("hidden_dim").get_to(c.hidden_dim);
    j.at("content_dim").get_to(c.content_dim);
    j.at("speaker_dim").get_to(c.speaker_dim);
    j.at("attention_heads").get_to(c.attention_heads);
    j.at("ffn_dim").get_to(c.ffn_dim);
    j.at("attention_blocks").get_to(c.attention_blocks);
    j.at("content_kernel").get_to(c.content_kernel);
    j.at("speaker_kernels").get_to(c.speaker_kernels);
    j.at("postnet_layers").get_to(c.postnet_layers);
    j.at("postnet_kernel").get_to(c.postnet_kernel);
    j.at("content_dropout").get_to(c.content_dropout);
    j.at("decoder_dropout").get_to(c.decoder_dropout);
    j.at("postnet_dropout").get_to(c.postnet_dropout);
    j.at("positional_encoding").get_to(c.positional_encoding);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config metadata: ") + e.what());
  }
  c.Validate();
  return c;
}

nlohmann::ordered_json TrainRunConfigToJson(const TrainRunConfig& r) {
  return {{"beta_c", r.beta_c},
          {"beta_s", r.beta_s},
          {"steps", r.steps},
          {"batch_size", r.batch_size},
          {"crop_frames", r.crop_frames},
          {"seed", r.seed},
          {"checkpoint_every", r.checkpoint_every},
          {"validate_every", r.validate_every},
          {"progress_every", r.progress_every},
          {"learning_rate", r.adam.learning_rate},
          {"adam_beta1", r.adam.beta1},
          {"adam_beta2", r.adam.beta2},
          {"adam_epsilon", r.adam.epsilon}};
}

TrainRunConfig TrainRunConfigFromJson(const nlohmann::json& j) {
  TrainRunConfig r;
  try {
    j.at("beta_c").get_to(r.beta_c);
    j.at("beta_s").get_to(r.beta_s);
    j.at("steps").get_to(r.steps);
    j.at("batch_size").get_to(r.batch_size);
    j.at("crop_frames").get_to(r.crop_frames);
    j.at("seed").get_to(r.seed);
    j.at("checkpoint_every").get_to(r.checkpoint_every);
    j.at("validate_every").get_to(r.validate_every);
    j.at("progress_every").get_to(r.progress_every);
    j.at("learning_rate").get_to(r.adam.learning_rate);
    j.at("adam_beta1").get_to(r.adam.beta1);
    j.at("adam_beta2").get_to(r.adam.beta2);
    j.at("adam_epsilon").get_to(r.adam.epsilon);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run config metadata: ") + e.what());
  }
  return r;
}

std::string EncodeCheckpoint(const Model<float>& model,
                             const AdamState<float>& optimizer,
                             const TrainRunConfig& run, int64_t step) {
  const auto& entries = model.params().entries();
  const bool has_moments = !optimizer.m.empty();
  if (has_moments && (optimizer.m.size() != entries.size() ||
                      optimizer.v.size() != entries.size())) {
    throw ContractError("optimizer state does not match the model");
  }
  nlohmann::ordered_json meta;
  meta["format"] = "svae-checkpoint";
  meta["model"] = ModelConfigToJson(model.config());
  meta["run"] = TrainRunConfigToJson(run);
  meta["step"] = step;
  meta["optimizer_step"] = optimizer.step;
  meta["rng"] = {{"seed", run.seed}, {"next_step", step}};
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& [name, tensor] : entries) {
    tensors.push_back({{"name", name}, {"shape", tensor.shape()}});
  }
  meta["tensors"] = std::move(tensors);
  const std::string meta_text = meta.dump();

  std::string out(kMagic);
  PutU32(out, kCheckpointVersion);
  PutU64(out, meta_text.size());
  out += meta_text;
  const std::vector<float> zeros;
  for (size_t i = 0; i < entries.size(); ++i) {
    const TensorF& t = entries[i].second;
    PutFloats(out, t.values());
    if (has_moments) {
      PutFloats(out, optimizer.m[i]);
      PutFloats(out, optimizer.v[i]);
    } else {
      out.append(static_cast<size_t>(t.numel()) * 8, '\0');
    }
  }
  return out;
}

static Checkpoint DecodeUnchecked(std::string_view bytes) {
  Reader reader(bytes);
  if (reader.Take(kMagic.size(), "magic") != kMagic) {
    throw FormatError("not a checkpoint: bad magic at byte 0");
  }
  const uint32_t version = static_cast<uint32_t>(reader.Uint(4, "version"));
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) +
                       " unsupported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const uint64_t meta_len = reader.Uint(8, "metadata length");
  if (meta_len > reader.remaining()) {
    throw FormatError("checkpoint metadata length " + std::to_string(meta_len) +
                      " exceeds file size");
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(reader.Take(meta_len, "metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  const ModelConfig model_config = ModelConfigFromJson(meta.at("model"));
  const TrainRunConfig run = TrainRunConfigFromJson(meta.at("run"));
  Checkpoint ckpt{model_config, run, meta.at("step").get<int64_t>(),
                  Model<float>(model_config, run.seed), AdamState<float>{}};
  ckpt.optimizer.config = run.adam;
  ckpt.optimizer.step = meta.at("optimizer_step").get<int64_t>();

  auto& entries = ckpt.model.params().entries();
  const auto& tensors = meta.at("tensors");
  if (tensors.size() != entries.size()) {
    throw FormatError("checkpoint holds " + std::to_string(tensors.size()) +
                      " tensors, model expects " +
                      std::to_string(entries.size()));
  }
  ckpt.optimizer.m.resize(entries.size());
  ckpt.optimizer.v.resize(entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    auto& [name, tensor] = entries[i];
    const std::string stored = tensors[i].at("name").get<std::string>();
    if (stored != name) {
      throw FormatError("checkpoint tensor " + std::to_string(i) + " is " +
                        stored + ", expected " + name);
    }
    if (tensors[i].at("shape").get<Shape>() != tensor.shape()) {
      throw FormatError("checkpoint tensor " + name + " has shape " +
                        ShapeString(tensors[i].at("shape").get<Shape>()) +
                        ", expected " + ShapeString(tensor.shape()));
    }
    reader.Floats(tensor.mutable_values(), name.c_str());
    ckpt.optimizer.m[i].resize(tensor.numel());
    ckpt.optimizer.v[i].resize(tensor.numel());
    reader.Floats(ckpt.optimizer.m[i], name.c_str());
    reader.Floats(ckpt.optimizer.v[i], name.c_str());
  }
  if (reader.remaining() != 0) {
    throw FormatError("checkpoint has " + std::to_string(reader.remaining()) +
                      " trailing bytes at byte " + std::to_string(reader.pos()));
  }
  if (ckpt.optimizer.step == 0) {
    ckpt.optimizer.m.clear();
    ckpt.optimizer.v.clear();
  }
  return ckpt;
}

Checkpoint DecodeCheckpoint(std::string_view bytes) {
  try {
    return DecodeUnchecked(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
}

void SaveCheckpoint(const std::filesystem::path& path,
                    const Model<float>& model,
                    const AdamState<float>& optimizer,
                    const TrainRunConfig& run, int64_t step) {
  const std::string bytes = EncodeCheckpoint(model, optimizer, run, step);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return DecodeCheckpoint(buffer.str());
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace svae
