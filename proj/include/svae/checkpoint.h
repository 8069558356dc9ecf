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

#ifndef SVAE_CHECKPOINT_H_
#define SVAE_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "svae/adam.h"
#include "svae/model.h"
#include "svae/trainer.h"

namespace svae {

// Checkpoint file: "SVAECKPT", u32 version, u64 metadata length, UTF-8 JSON
// metadata (model config, run config, step, optimizer step, tensor names
// and shapes), then per tensor its values, Adam m and Adam v as
// little-endian IEEE-754 binary32. The random state is implied by
// (seed, step).
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model_config;
  TrainRunConfig run;
  int64_t step = 0;
  Model<float> model;
  AdamState<float> optimizer;
};

std::string EncodeCheckpoint(const Model<float>& model,
                             const AdamState<float>& optimizer,
                             const TrainRunConfig& run, int64_t step);
Checkpoint DecodeCheckpoint(std::string_view bytes);

// Writes to a temporary sibling first and renames it into place.
void SaveCheckpoint(const std::filesystem::path& path,
                    const Model<float>& model,
                    const AdamState<float>& optimizer,
                    const TrainRunConfig& run, int64_t step);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

nlohmann::ordered_json ModelConfigToJson(const ModelConfig& config);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);
nlohmann::ordered_json TrainRunConfigToJson(const TrainRunConfig& run);
TrainRunConfig TrainRunConfigFromJson(const nlohmann::json& j);

}  // namespace svae

#endif  // SVAE_CHECKPOINT_H_
