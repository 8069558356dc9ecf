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

#include "svae/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <spdlog/spdlog.h>
#include <string>

#include "svae/checkpoint.h"
#include "svae/errors.h"

namespace svae {

void TrainRunConfig::Validate(const ModelConfig& model) const {
  weights().Validate();
  if (steps <= 0) throw ConfigError("train.steps must be positive");
  if (batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  const int64_t min_crop = std::max(model.MinSpeakerFrames(), kMinShuffleSegment);
  if (crop_frames < min_crop) {
    throw ConfigError("train.crop_frames = " + std::to_string(crop_frames) +
                      " is below the minimum of " + std::to_string(min_crop));
  }
  if (checkpoint_every < 0 || validate_every < 0 || progress_every < 0) {
    throw ConfigError("train cadences must be non-negative");
  }
  adam.Validate();
}

Trainer::Trainer(const ModelConfig& model_config, const TrainRunConfig& run,
                 const std::vector<Utterance>& train,
                 const std::vector<Utterance>* valid)
    : Trainer(Model<float>(model_config, run.seed), AdamState<float>{}, 0, run,
              train, valid) {}

Trainer::Trainer(Model<float> model, AdamState<float> optimizer, int64_t step,
                 const TrainRunConfig& run, const std::vector<Utterance>& train,
                 const std::vector<Utterance>* valid)
    : run_(run),
      model_(std::move(model)),
      optimizer_(std::move(optimizer)),
      step_(step),
      train_(&train),
      valid_(valid) {
  run_.Validate(model_.config());
  optimizer_.config = run_.adam;
  CheckCorpus();
}

void Trainer::CheckCorpus() const {
  if (train_->empty()) throw ValidationError("training corpus is empty");
  auto check = [this](const std::vector<Utterance>& utterances) {
    for (const Utterance& u : utterances) {
      if (u.features.frames < run_.crop_frames) {
        throw LengthError("utterance " + u.id + " has " +
                          std::to_string(u.features.frames) +
                          " frames, shorter than crop_frames = " +
                          std::to_string(run_.crop_frames));
      }
      if (u.features.dim != model_.config().feature_dim) {
        throw DimensionError("utterance " + u.id + " has feature dim " +
                             std::to_string(u.features.dim) +
                             ", model expects " +
                             std::to_string(model_.config().feature_dim));
      }
    }
  };
  check(*train_);
  if (valid_) check(*valid_);
}

LossBreakdown Trainer::Step() {
  const uint64_t seed = run_.seed;
  const uint64_t t = static_cast<uint64_t>(step_);
  Rng batch_rng = MakeStream(seed, Stream::kBatch, t);
  std::vector<const Utterance*> picks(run_.batch_size);
  const int64_t n = static_cast<int64_t>(train_->size());
  for (auto& p : picks) p = &(*train_)[batch_rng.UniformInt(0, n - 1)];
  TensorF x = MakeBatch(picks, run_.crop_frames, batch_rng);

  Rng shuffle = MakeStream(seed, Stream::kShuffle, t);
  Rng dropout = MakeStream(seed, Stream::kDropout, t);
  Rng reparam = MakeStream(seed, Stream::kReparam, t);
  const LossStreams streams{&shuffle, &dropout, &reparam};

  model_.params().ZeroGrad();
  LossResult<float> result =
      TotalLoss(model_, x, run_.weights(), /*training=*/true, streams,
                hook_ ? &*hook_ : nullptr);
  if (!std::isfinite(result.breakdown.total)) {
    throw NumericError("non-finite loss at step " + std::to_string(step_ + 1));
  }
  result.total.Backward();
  AdamStep(model_.params(), optimizer_);
  ++step_;
  return result.breakdown;
}

double Trainer::ValidationLoss() const {
  if (!valid_ || valid_->empty()) return std::numeric_limits<double>::quiet_NaN();
  NoGradGuard no_grad;
  const int64_t crop = run_.crop_frames;
  const int64_t dim = model_.config().feature_dim;
  double weighted = 0.0;
  size_t done = 0;
  while (done < valid_->size()) {
    const size_t count =
        std::min<size_t>(run_.batch_size, valid_->size() - done);
    std::vector<float> values;
    values.reserve(count * crop * dim);
    for (size_t i = 0; i < count; ++i) {
      const auto& f = (*valid_)[done + i].features.values;
      values.insert(values.end(), f.begin(), f.begin() + crop * dim);
    }
    TensorF x = TensorF::FromVector(
        {static_cast<int64_t>(count), crop, dim}, std::move(values));
    const LossResult<float> r =
        TotalLoss(model_, x, run_.weights(), /*training=*/false, LossStreams{});
    weighted += r.breakdown.reconstruction * static_cast<double>(count);
    done += count;
  }
  return weighted / static_cast<double>(valid_->size());
}

namespace {

// Keeps the header and the records with step <= last_step.
void TruncateLog(const std::filesystem::path& path, int64_t last_step,
                 const std::string& header) {
  std::vector<std::string> kept{header};
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find('\t'))) <= last_step) {
        kept.push_back(line);
      }
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& line : kept) out << line << '\n';
}

std::filesystem::path CheckpointPath(const std::filesystem::path& dir,
                                     int64_t step) {
  char name[64];
  std::snprintf(name, sizeof(name), "ckpt-%08lld.svck",
                static_cast<long long>(step));
  return dir / name;
}

}  // namespace

TrainOutcome RunTraining(Trainer& trainer, const ModelConfig& model_config,
                         const std::filesystem::path& out_dir) {
  const TrainRunConfig& run = trainer.run();
  if (!(trainer.model().config() == model_config)) {
    throw ContractError("trainer model config differs from the run config");
  }
  std::filesystem::create_directories(out_dir);
  const auto loss_path = out_dir / "loss.tsv";
  const auto valid_path = out_dir / "valid.tsv";
  TruncateLog(loss_path, trainer.step(),
              "step\ttotal\treconstruction\tcontent_kl\tspeaker_kl");
  TruncateLog(valid_path, trainer.step(), "step\tvalid_reconstruction");
  std::ofstream loss_log(loss_path, std::ios::app);
  std::ofstream valid_log(valid_path, std::ios::app);

  TrainOutcome outcome;
  bool first = true;
  while (trainer.step() < run.steps) {
    LossBreakdown loss;
    try {
      loss = trainer.Step();
    } catch (const NumericError& e) {
      const auto path = out_dir / "last-good.svck";
      SaveCheckpoint(path, trainer.model(), trainer.optimizer(), run,
                     trainer.step());
      spdlog::error("{}; last good state saved to {}", e.what(), path.string());
      throw;
    }
    const int64_t step = trainer.step();
    if (first) outcome.first_loss = loss;
    first = false;
    outcome.last_loss = loss;
    ++outcome.steps_completed;
    loss_log << FormatLossRecord(step, loss) << '\n';

    if (run.progress_every > 0 && step % run.progress_every == 0) {
      spdlog::info("step {}/{} loss {:.5f} recon {:.5f} content_kl {:.4f} "
                   "speaker_kl {:.4f}",
                   step, run.steps, loss.total, loss.reconstruction,
                   loss.content_kl, loss.speaker_kl);
    }
    if (run.validate_every > 0 && step % run.validate_every == 0) {
      const double v = trainer.ValidationLoss();
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      valid_log << step << '\t' << buf << '\n';
      valid_log.flush();
      spdlog::info("step {} validation reconstruction {:.5f}", step, v);
    }
    if (run.checkpoint_every > 0 && step % run.checkpoint_every == 0) {
      loss_log.flush();
      SaveCheckpoint(CheckpointPath(out_dir, step), trainer.model(),
                     trainer.optimizer(), run, step);
    }
  }
  loss_log.flush();
  outcome.final_checkpoint = out_dir / "final.svck";
  SaveCheckpoint(outcome.final_checkpoint, trainer.model(),
                 trainer.optimizer(), run, trainer.step());
  return outcome;
}

namespace {

double LogDistance(double a, double b) {
  if (a == b) return 0.0;
  if (a <= 0.0 || b <= 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(std::log(a) - std::log(b));
}

}  // namespace

std::vector<LossWeights> TuneScheduleHint(const TuneGrid& grid, double ratio) {
  std::vector<LossWeights> out;
  if (grid.beta_c.empty() || grid.beta_s.empty()) {
    for (double bc : {0.1, 0.03, 0.01, 0.003, 0.001}) {
      out.push_back({bc, ratio * bc});
    }
    return out;
  }
  std::vector<double> bc = grid.beta_c;
  std::vector<double> bs = grid.beta_s;
  std::sort(bc.begin(), bc.end(), std::greater<>());
  bc.erase(std::unique(bc.begin(), bc.end()), bc.end());
  std::sort(bs.begin(), bs.end());
  bs.erase(std::unique(bs.begin(), bs.end()), bs.end());

  auto snap = [&bs](double target) {
    double best = bs.front();
    for (double s : bs) {
      if (LogDistance(s, target) < LogDistance(best, target)) best = s;
    }
    return best;
  };
  auto contains = [&out](double c, double s) {
    return std::any_of(out.begin(), out.end(), [&](const LossWeights& w) {
      return w.beta_c == c && w.beta_s == s;
    });
  };
  for (double c : bc) {
    const double s = snap(ratio * c);
    if (!contains(c, s)) out.push_back({c, s});
  }
  for (double c : bc) {
    const double anchor = snap(ratio * c);
    std::vector<double> rest = bs;
    std::stable_sort(rest.begin(), rest.end(), [anchor](double a, double b) {
      return LogDistance(a, anchor) < LogDistance(b, anchor);
    });
    for (double s : rest) {
      if (!contains(c, s)) out.push_back({c, s});
    }
  }
  return out;
}

}  // namespace svae
