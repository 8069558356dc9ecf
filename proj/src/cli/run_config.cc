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

#include "svae/run_config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "CLI11.hpp"
#include "svae/errors.h"

namespace svae {

namespace {

struct KeySpec {
  std::string section;  // empty for top-level keys
  std::string key;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;

  std::string full() const { return section.empty() ? key : section + "." + key; }
};

std::string FormatNumber(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

[[noreturn]] void BadValue(const std::string& key, const std::string& value,
                           const char* expected) {
  throw ConfigError("config key " + key + ": '" + value + "' is not " +
                    expected);
}

int64_t ParseInt(const std::string& key, const std::string& v) {
  int64_t out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    BadValue(key, v, "an integer");
  }
  return out;
}

uint64_t ParseUint(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    BadValue(key, v, "a non-negative integer");
  }
  return out;
}

double ParseDouble(const std::string& key, const std::string& v) {
  double out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    BadValue(key, v, "a number");
  }
  return out;
}

bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  BadValue(key, v, "a boolean (true|false)");
}

std::vector<std::string> SplitList(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',' || c == ' ' || c == '[' || c == ']') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

template <typename Get>
KeySpec Int(std::string section, std::string key, std::string help, Get field) {
  const std::string name = section + "." + key;
  return {section, key, std::move(help),
          [field, name](RunConfig& c, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(
                ParseInt(name, v));
          },
          [field](const RunConfig& c) {
            return std::to_string(field(const_cast<RunConfig&>(c)));
          }};
}

template <typename Get>
KeySpec Real(std::string section, std::string key, std::string help,
             Get field) {
  const std::string name = section + "." + key;
  return {section, key, std::move(help),
          [field, name](RunConfig& c, const std::string& v) {
            field(c) = ParseDouble(name, v);
          },
          [field](const RunConfig& c) {
            return FormatNumber(field(const_cast<RunConfig&>(c)));
          }};
}

template <typename Get>
KeySpec RealList(std::string section, std::string key, std::string help,
                 Get field) {
  const std::string name = section + "." + key;
  return {section, key, std::move(help),
          [field, name](RunConfig& c, const std::string& v) {
            std::vector<double> out;
            for (const auto& item : SplitList(v)) {
              out.push_back(ParseDouble(name, item));
            }
            field(c) = out;
          },
          [field](const RunConfig& c) {
            std::string s;
            for (double x : field(const_cast<RunConfig&>(c))) {
              s += (s.empty() ? "" : ",") + FormatNumber(x);
            }
            return s;
          }};
}

KeySpec Range(std::string key, std::string help, TokenRange SynthConfig::*m) {
  const std::string name = "data." + key;
  return {"data", key, std::move(help),
          [m, name](RunConfig& c, const std::string& v) {
            const auto parts = SplitList(v);
            if (parts.size() != 2) BadValue(name, v, "a pair first,count");
            (c.synth.*m).first = static_cast<int>(ParseInt(name, parts[0]));
            (c.synth.*m).count = static_cast<int>(ParseInt(name, parts[1]));
          },
          [m](const RunConfig& c) {
            return std::to_string((c.synth.*m).first) + "," +
                   std::to_string((c.synth.*m).count);
          }};
}

const std::vector<KeySpec>& Keys() {
  static const std::vector<KeySpec> keys = [] {
    std::vector<KeySpec> k;
    k.push_back({"", "preset", "tiny | paper-dims; expanded before other keys",
                 [](RunConfig& c, const std::string& v) { c.preset = v; },
                 [](const RunConfig& c) { return c.preset; }});
    k.push_back({"", "seed", "master seed for data, initialization, training and evaluation",
                 [](RunConfig& c, const std::string& v) {
                   c.seed = ParseUint("seed", v);
                   c.train.seed = c.seed;
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
#define SVAE_FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }
    k.push_back(Int("model", "feature_dim", "input feature dimension", SVAE_FIELD(model.feature_dim)));
    k.push_back(Int("model", "hidden_dim", "hidden width", SVAE_FIELD(model.hidden_dim)));
    k.push_back(Int("model", "content_dim", "content latent dimension", SVAE_FIELD(model.content_dim)));
    k.push_back(Int("model", "speaker_dim", "speaker latent dimension", SVAE_FIELD(model.speaker_dim)));
    k.push_back(Int("model", "attention_heads", "heads per self-attention block", SVAE_FIELD(model.attention_heads)));
    k.push_back(Int("model", "ffn_dim", "feed-forward width of attention blocks", SVAE_FIELD(model.ffn_dim)));
    k.push_back(Int("model", "attention_blocks", "self-attention blocks per stack", SVAE_FIELD(model.attention_blocks)));
    k.push_back(Int("model", "content_kernel", "kernel of the content/decoder convs (odd)", SVAE_FIELD(model.content_kernel)));
    k.push_back({"model", "speaker_kernels", "kernel of each down-sampling block (odd)",
                 [](RunConfig& c, const std::string& v) {
                   std::vector<int> out;
                   for (const auto& item : SplitList(v)) {
                     out.push_back(static_cast<int>(ParseInt("model.speaker_kernels", item)));
                   }
                   c.model.speaker_kernels = out;
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (int x : c.model.speaker_kernels) {
                     s += (s.empty() ? "" : ",") + std::to_string(x);
                   }
                   return s;
                 }});
    k.push_back(Int("model", "postnet_layers", "PostNet conv layers", SVAE_FIELD(model.postnet_layers)));
    k.push_back(Int("model", "postnet_kernel", "PostNet kernel (odd)", SVAE_FIELD(model.postnet_kernel)));
    k.push_back(Real("model", "content_dropout", "dropout after content encoder convs", SVAE_FIELD(model.content_dropout)));
    k.push_back(Real("model", "decoder_dropout", "dropout after decoder convs", SVAE_FIELD(model.decoder_dropout)));
    k.push_back(Real("model", "postnet_dropout", "dropout after PostNet layers 1..n-1", SVAE_FIELD(model.postnet_dropout)));
    k.push_back({"model", "positional_encoding", "add sinusoidal positions before attention",
                 [](RunConfig& c, const std::string& v) {
                   c.model.positional_encoding = ParseBool("model.positional_encoding", v);
                 },
                 [](const RunConfig& c) {
                   return std::string(c.model.positional_encoding ? "true" : "false");
                 }});

    k.push_back({"data", "source", "synthetic | manifest",
                 [](RunConfig& c, const std::string& v) { c.data_source = v; },
                 [](const RunConfig& c) { return c.data_source; }});
    k.push_back({"data", "manifest_dir", "directory with manifest_{train,valid,test}.tsv (source = manifest)",
                 [](RunConfig& c, const std::string& v) { c.manifest_dir = v; },
                 [](const RunConfig& c) { return c.manifest_dir; }});
    k.push_back(Int("data", "feature_dim", "synthetic feature dimension", SVAE_FIELD(synth.feature_dim)));
    k.push_back(Int("data", "speaker_factors", "speaker factor count", SVAE_FIELD(synth.speaker_factors)));
    k.push_back(Int("data", "content_factors", "content factor count", SVAE_FIELD(synth.content_factors)));
    k.push_back(Int("data", "train_speakers_per_language", "training speakers per language", SVAE_FIELD(synth.train_speakers_per_language)));
    k.push_back(Int("data", "valid_speakers_per_language", "validation speakers per language", SVAE_FIELD(synth.valid_speakers_per_language)));
    k.push_back(Int("data", "test_speakers_per_language", "test speakers per language", SVAE_FIELD(synth.test_speakers_per_language)));
    k.push_back(Int("data", "utterances_per_speaker", "utterances per speaker", SVAE_FIELD(synth.utterances_per_speaker)));
    k.push_back(Int("data", "min_frames", "shortest utterance", SVAE_FIELD(synth.min_frames)));
    k.push_back(Int("data", "max_frames", "longest utterance", SVAE_FIELD(synth.max_frames)));
    k.push_back(Int("data", "min_token_frames", "shortest token", SVAE_FIELD(synth.min_token_frames)));
    k.push_back(Int("data", "max_token_frames", "longest token", SVAE_FIELD(synth.max_token_frames)));
    k.push_back(Range("codebook_a", "token ids of language A as first,count", &SynthConfig::codebook_a));
    k.push_back(Range("codebook_b", "token ids of language B as first,count", &SynthConfig::codebook_b));
    k.push_back(Real("data", "content_scale", "content map column norm", SVAE_FIELD(synth.content_scale)));
    k.push_back(Real("data", "speaker_scale", "speaker map column norm of the first factor", SVAE_FIELD(synth.speaker_scale)));
    k.push_back(Real("data", "speaker_decay", "amplitude ratio between consecutive speaker factors", SVAE_FIELD(synth.speaker_decay)));
    k.push_back(Real("data", "noise_std", "additive white noise", SVAE_FIELD(synth.noise_std)));
    k.push_back(Int("data", "mixing_seed", "seed of the mixing maps and token vectors", SVAE_FIELD(synth.mixing_seed)));

    k.push_back(Real("train", "beta_c", "content KL weight", SVAE_FIELD(train.beta_c)));
    k.push_back(Real("train", "beta_s", "speaker KL weight", SVAE_FIELD(train.beta_s)));
    k.push_back(Int("train", "steps", "optimization steps", SVAE_FIELD(train.steps)));
    k.push_back(Int("train", "batch_size", "utterance crops per step", SVAE_FIELD(train.batch_size)));
    k.push_back(Int("train", "crop_frames", "frames per training crop", SVAE_FIELD(train.crop_frames)));
    k.push_back(Int("train", "checkpoint_every", "steps between checkpoints (0 = final only)", SVAE_FIELD(train.checkpoint_every)));
    k.push_back(Int("train", "validate_every", "steps between validation passes (0 = never)", SVAE_FIELD(train.validate_every)));
    k.push_back(Int("train", "progress_every", "steps between progress lines (0 = never)", SVAE_FIELD(train.progress_every)));
    k.push_back(Real("train", "learning_rate", "Adam learning rate", SVAE_FIELD(train.adam.learning_rate)));
    k.push_back(Real("train", "adam_beta1", "Adam first-moment decay", SVAE_FIELD(train.adam.beta1)));
    k.push_back(Real("train", "adam_beta2", "Adam second-moment decay", SVAE_FIELD(train.adam.beta2)));
    k.push_back(Real("train", "adam_epsilon", "Adam epsilon", SVAE_FIELD(train.adam.epsilon)));

    k.push_back(RealList("eval", "grid_beta_c", "sweep values of beta_c", SVAE_FIELD(eval.grid_beta_c)));
    k.push_back(RealList("eval", "grid_beta_s", "sweep values of beta_s", SVAE_FIELD(eval.grid_beta_s)));
    k.push_back(Int("eval", "probe_pairs", "conversion-probe pairs per kind", SVAE_FIELD(eval.probe_pairs)));
#undef SVAE_FIELD
    return k;
  }();
  return keys;
}

std::string AcceptedList() {
  std::string s;
  for (const auto& k : AcceptedConfigKeys()) s += (s.empty() ? "" : ", ") + k;
  return s;
}

}  // namespace

const std::vector<std::string>& PresetNames() {
  static const std::vector<std::string> names{"tiny", "paper-dims"};
  return names;
}

RunConfig PresetRunConfig(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  if (preset == "tiny") {
    c.model = ModelConfig::Tiny();
    c.synth.feature_dim = c.model.feature_dim;
    // Short tokens over long utterances keep the utterance-level content
    // mean, which the segment shuffle cannot hide, close to constant.
    c.synth.min_frames = 128;
    c.synth.max_frames = 256;
    c.synth.min_token_frames = 3;
    c.synth.max_token_frames = 8;
    c.synth.noise_std = 0.02;
    c.train.steps = 3000;
    c.train.batch_size = 16;
    c.train.crop_frames = 64;
    c.train.adam.learning_rate = 5e-4;
  } else if (preset == "paper-dims") {
    c.model = ModelConfig::PaperDims();
    c.synth.feature_dim = c.model.feature_dim;
    c.synth.min_frames = 128;
    c.synth.max_frames = 256;
    c.train.steps = 30000;
    c.train.batch_size = 32;
    c.train.crop_frames = 128;
  } else {
    throw ConfigError("unknown preset '" + preset +
                      "' (accepted: tiny, paper-dims)");
  }
  c.train.seed = c.seed;
  return c;
}

void RunConfig::Validate() const {
  model.Validate();
  if (data_source == "synthetic") {
    if (!manifest_dir.empty()) {
      throw ConfigError("data.manifest_dir is set but data.source = synthetic; "
                        "specify exactly one data source");
    }
    synth.Validate();
    if (synth.feature_dim != model.feature_dim) {
      throw ConfigError("data.feature_dim (" + std::to_string(synth.feature_dim) +
                        ") must equal model.feature_dim (" +
                        std::to_string(model.feature_dim) + ")");
    }
    if (train.crop_frames > synth.min_frames) {
      throw ConfigError("train.crop_frames (" + std::to_string(train.crop_frames) +
                        ") exceeds data.min_frames (" +
                        std::to_string(synth.min_frames) + ")");
    }
    if (synth.test_speakers_per_language < 2) {
      throw ConfigError("data.test_speakers_per_language must be >= 2 for verification");
    }
  } else if (data_source == "manifest") {
    if (manifest_dir.empty()) {
      throw ConfigError("data.source = manifest needs data.manifest_dir");
    }
  } else {
    throw ConfigError("data.source must be synthetic or manifest, got '" +
                      data_source + "'");
  }
  train.Validate(model);
  if (train.seed != seed) throw ConfigError("train seed differs from seed");
  if (eval.grid_beta_c.empty() || eval.grid_beta_s.empty()) {
    throw ConfigError("eval.grid_beta_c and eval.grid_beta_s must be non-empty");
  }
  for (double b : eval.grid_beta_c) LossWeights{b, 0.0}.Validate();
  for (double b : eval.grid_beta_s) LossWeights{0.0, b}.Validate();
  if (eval.probe_pairs < 0) throw ConfigError("eval.probe_pairs must be >= 0");
}

std::vector<std::string> AcceptedConfigKeys() {
  std::vector<std::string> out;
  for (const auto& k : Keys()) out.push_back(k.full());
  return out;
}

RunConfig ParseRunConfig(std::string_view text,
                         const std::optional<std::string>& preset_override,
                         const std::optional<uint64_t>& seed_override) {
  std::vector<CLI::ConfigItem> items;
  try {
    std::istringstream in{std::string(text)};
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  struct Entry {
    std::string name;
    std::string value;
  };
  std::vector<Entry> entries;
  std::string preset = "tiny";
  for (const auto& item : items) {
    if (item.name == "--" || item.name == "++" || item.name.empty()) continue;
    std::vector<std::string> parents = item.parents;
    if (!parents.empty() && parents.front() == "default") parents.erase(parents.begin());
    std::string name;
    for (const auto& p : parents) name += p + ".";
    name += item.name;
    std::string value;
    for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
    const auto& keys = Keys();
    if (std::none_of(keys.begin(), keys.end(),
                     [&](const KeySpec& k) { return k.full() == name; })) {
      throw ConfigError("unknown config key '" + name + "'; accepted keys: " +
                        AcceptedList());
    }
    if (name == "preset") preset = value;
    entries.push_back({name, value});
  }
  if (preset_override) preset = *preset_override;
  RunConfig config = PresetRunConfig(preset);
  for (const Entry& e : entries) {
    if (e.name == "preset") continue;
    for (const auto& k : Keys()) {
      if (k.full() == e.name) k.set(config, e.value);
    }
  }
  if (seed_override) {
    config.seed = *seed_override;
    config.train.seed = *seed_override;
  }
  config.Validate();
  return config;
}

RunConfig LoadRunConfig(const std::optional<std::filesystem::path>& path,
                        const std::optional<std::string>& preset_override,
                        const std::optional<uint64_t>& seed_override) {
  std::string text;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot read config file " + path->string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    text = buffer.str();
  }
  return ParseRunConfig(text, preset_override, seed_override);
}

std::string RenderRunConfig(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& k : Keys()) {
    if (k.section != section) {
      section = k.section;
      out += "\n[" + section + "]\n";
    }
    out += "# " + k.help + "\n" + k.key + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace svae
