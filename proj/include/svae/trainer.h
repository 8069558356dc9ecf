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

#ifndef SVAE_TRAINER_H_
#define SVAE_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "svae/adam.h"
#include "svae/data.h"
#include "svae/model.h"
#include "svae/objective.h"

namespace svae {

struct TrainRunConfig {
  double beta_c = 1e-2;
  double beta_s = 1e-4;
  int64_t steps = 30000;
  int64_t batch_size = 32;
  int64_t crop_frames = 64;
  uint64_t seed = 1;
  int64_t checkpoint_every = 1000;  // 0 disables periodic checkpoints
  int64_t validate_every = 500;     // 0 disables validation
  int64_t progress_every = 100;     // 0 disables progress lines
  AdamConfig adam;

  LossWeights weights() const { return {beta_c, beta_s}; }
  // Throws ConfigError; the crop must cover the speaker encoder's pooling
  // minimum and the shortest shuffle segment.
  void Validate(const ModelConfig& model) const;
  bool operator==(const TrainRunConfig&) const = default;
};

// Training state. The random streams of step t are derived from
// (seed, purpose, t), so the model, the optimizer state and the step count
// fully determine the rest of the trajectory.
class Trainer {
 public:
  Trainer(const ModelConfig& model_config, const TrainRunConfig& run,
          const std::vector<Utterance>& train,
          const std::vector<Utterance>* valid = nullptr);
  // Continues from a saved state.
  Trainer(Model<float> model, AdamState<float> optimizer, int64_t step,
          const TrainRunConfig& run, const std::vector<Utterance>& train,
          const std::vector<Utterance>* valid = nullptr);

  // Runs one optimization step and returns its loss. A non-finite loss or
  // gradient throws NumericError and leaves the state untouched.
  LossBreakdown Step();

  // Eval-mode reconstruction loss over the validation utterances, using a
  // fixed crop of every utterance.
  double ValidationLoss() const;

  // Observes the encoder inputs of every step.
  void set_input_hook(EncoderInputHook<float> hook) { hook_ = std::move(hook); }

  int64_t step() const { return step_; }
  const TrainRunConfig& run() const { return run_; }
  const Model<float>& model() const { return model_; }
  Model<float>& model() { return model_; }
  const AdamState<float>& optimizer() const { return optimizer_; }

 private:
  void CheckCorpus() const;

  TrainRunConfig run_;
  Model<float> model_;
  AdamState<float> optimizer_;
  int64_t step_ = 0;
  const std::vector<Utterance>* train_;
  const std::vector<Utterance>* valid_;
  std::optional<EncoderInputHook<float>> hook_;
};

struct TrainOutcome {
  int64_t steps_completed = 0;
  LossBreakdown first_loss;
  LossBreakdown last_loss;
  std::filesystem::path final_checkpoint;
};

// Runs `trainer` to run().steps, writing into out_dir: loss.tsv (one
// FormatLossRecord line per step), valid.tsv, ckpt-<step>.svck every
// checkpoint_every steps and final.svck. Existing log lines past the
// trainer's current step are dropped, so a resumed run produces the same
// files as an uninterrupted one. On a non-finite loss the pre-step state is
// saved as last-good.svck and the NumericError is rethrown.
TrainOutcome RunTraining(Trainer& trainer, const ModelConfig& model_config,
                         const std::filesystem::path& out_dir);

struct TuneGrid {
  std::vector<double> beta_c;
  std::vector<double> beta_s;
};

// Trial order of the beta tuning heuristic: begin at the largest beta_c
// with a small beta_s, lower beta_c step by step while scaling beta_s with
// it (beta_s = ratio * beta_c, snapped to the nearest grid value in log
// space), then visit the remaining cells by descending beta_c and by
// distance from that beta_c's proportional beta_s. An empty grid expands
// to the ladder beta_c in {0.1, 0.03, 0.01, 0.003, 0.001}, beta_s in
// ratio * beta_c.
std::vector<LossWeights> TuneScheduleHint(const TuneGrid& grid,
                                          double ratio = 1e-2);

}  // namespace svae

#endif  // SVAE_TRAINER_H_
