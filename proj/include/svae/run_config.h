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

#ifndef SVAE_RUN_CONFIG_H_
#define SVAE_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "svae/data.h"
#include "svae/model.h"
#include "svae/trainer.h"

namespace svae {

struct EvalConfig {
  std::vector<double> grid_beta_c = {1e-3, 1e-2};
  std::vector<double> grid_beta_s = {1e-5, 1e-4, 1e-3};
  int64_t probe_pairs = 200;
  bool operator==(const EvalConfig&) const = default;
};

// Everything a command needs, after preset expansion.
struct RunConfig {
  std::string preset = "tiny";
  uint64_t seed = 1;
  ModelConfig model;
  // Exactly one data source: the synthetic generator, or a directory with
  // manifest_{train,valid,test}.tsv.
  std::string data_source = "synthetic";
  std::string manifest_dir;
  SynthConfig synth;
  TrainRunConfig train;
  EvalConfig eval;

  bool synthetic() const { return data_source == "synthetic"; }
  // Cross-field checks; throws ConfigError.
  void Validate() const;
  bool operator==(const RunConfig&) const = default;
};

// "tiny" or "paper-dims"; throws ConfigError otherwise.
RunConfig PresetRunConfig(const std::string& preset);
const std::vector<std::string>& PresetNames();

// Sectioned key = value text ([model], [data], [train], [eval], plus the
// top-level keys preset and seed). The preset, from the text or the
// override, is expanded first; remaining keys are applied on top. Unknown
// keys raise ConfigError naming the key and listing the accepted ones.
RunConfig ParseRunConfig(std::string_view text,
                         const std::optional<std::string>& preset_override = {},
                         const std::optional<uint64_t>& seed_override = {});
RunConfig LoadRunConfig(const std::optional<std::filesystem::path>& path,
                        const std::optional<std::string>& preset_override = {},
                        const std::optional<uint64_t>& seed_override = {});

// Fully expanded configuration; ParseRunConfig(RenderRunConfig(c)) == c.
std::string RenderRunConfig(const RunConfig& config);

// Accepted keys as "section.key" (top-level keys have no section).
std::vector<std::string> AcceptedConfigKeys();

}  // namespace svae

#endif  // SVAE_RUN_CONFIG_H_
