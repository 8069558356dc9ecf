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


#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "svae/adam.h"
#include "svae/checkpoint.h"
#include "svae/data.h"
#include "svae/errors.h"
#include "svae/trainer.h"

namespace fs = std::filesystem;

namespace svae {
namespace {

fs::path TempDir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("svae_test_training_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const SynthCorpus& SmallCorpus() {
  static const SynthCorpus corpus = [] {
    SynthConfig c;
    c.train_speakers_per_language = 3;
    c.valid_speakers_per_language = 1;
    c.test_speakers_per_language = 2;
    c.utterances_per_speaker = 6;
    c.noise_std = 0.05;
    return GenerateSyntheticCorpus(c, 11);
  }();
  return corpus;
}

TrainRunConfig SmallRun(int64_t steps) {
  TrainRunConfig run;
  run.steps = steps;
  run.batch_size = 4;
  run.crop_frames = 32;
  run.seed = 3;
  run.checkpoint_every = 2;
  run.validate_every = 2;
  run.progress_every = 0;
  run.adam.learning_rate = 1e-3;
  return run;
}

bool SameParams(const Model<float>& a, const Model<float>& b) {
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  if (ea.size() != eb.size()) return false;
  for (size_t i = 0; i < ea.size(); ++i) {
    const auto va = ea[i].second.values();
    const auto vb = eb[i].second.values();
    if (ea[i].first != eb[i].first ||
        std::memcmp(va.data(), vb.data(), va.size_bytes()) != 0) {
      return false;
    }
  }
  return true;
}

// Independent scalar Adam, written out step by step.
struct ScalarAdam {
  double lr, b1, b2, eps;
  double m = 0, v = 0;
  int t = 0;
  double Update(double p, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double m_hat = m / (1 - std::pow(b1, t));
    const double v_hat = v / (1 - std::pow(b2, t));
    return p - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

TEST(AdamTest, TwoStepTraceMatchesHandComputation) {
  ParamStore<double> store;
  auto w = store.Register("w", TensorD::FromVector({2}, {0.5, -1.0}));
  AdamState<double> state;
  state.config.learning_rate = 0.01;
  ScalarAdam ref0{0.01, 0.9, 0.999, 1e-7}, ref1 = ref0;
  double p0 = 0.5, p1 = -1.0;
  const double grads[2][2] = {{0.2, -3.0}, {-0.1, 0.5}};
  for (const auto& g : grads) {
    w.mutable_grad()[0] = g[0];
    w.mutable_grad()[1] = g[1];
    AdamStep(store, state);
    store.ZeroGrad();
    p0 = ref0.Update(p0, g[0]);
    p1 = ref1.Update(p1, g[1]);
    EXPECT_NEAR(w.at(0), p0, 1e-12);
    EXPECT_NEAR(w.at(1), p1, 1e-12);
  }
  EXPECT_EQ(state.step, 2);
  // First step by hand: m_hat = g, v_hat = g^2.
  EXPECT_NEAR(0.5 - 0.01 * 0.2 / (0.2 + 1e-7) - 0.5, -0.01, 1e-7);
}

TEST(AdamTest, FirstStepMagnitudeIsLearningRate) {
  ParamStore<double> store;
  auto w = store.Register("w", TensorD::FromVector({1}, {2.0}));
  AdamState<double> state;
  w.mutable_grad()[0] = 1.0;
  AdamStep(store, state);
  EXPECT_NEAR(2.0 - w.at(0), state.config.learning_rate / (1 + 1e-7), 1e-15);
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
  ParamStore<double> store;
  auto w = store.Register("w", TensorD::FromVector({3}, {1, 2, 3}));
  AdamState<double> state;
  AdamStep(store, state);  // no gradient buffer at all
  w.mutable_grad();        // explicit zeros
  AdamStep(store, state);
  EXPECT_EQ(std::vector<double>(w.values().begin(), w.values().end()),
            (std::vector<double>{1, 2, 3}));
}

TEST(AdamTest, NonFiniteGradientLeavesStateUntouched) {
  ParamStore<double> store;
  auto a = store.Register("a", TensorD::FromVector({1}, {1.0}));
  auto b = store.Register("b", TensorD::FromVector({1}, {1.0}));
  AdamState<double> state;
  a.mutable_grad()[0] = 0.5;
  b.mutable_grad()[0] = std::nan("");
  try {
    AdamStep(store, state);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(a.at(0), 1.0);
  EXPECT_EQ(state.step, 0);
  EXPECT_TRUE(state.m.empty());
}

TEST(AdamTest, ConfigValidation) {
  AdamConfig c;
  c.beta1 = 1.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = AdamConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(TrainRunConfigTest, CropMustCoverPooling) {
  TrainRunConfig run = SmallRun(1);
  run.crop_frames = 8;  // tiny model pools four times: needs 16
  EXPECT_THROW(run.Validate(ModelConfig::Tiny()), ConfigError);
  run.crop_frames = 16;
  EXPECT_NO_THROW(run.Validate(ModelConfig::Tiny()));
}

TEST(TrainerTest, ShortUtterancesRejected) {
  TrainRunConfig run = SmallRun(1);
  run.crop_frames = 200;
  EXPECT_THROW(Trainer(ModelConfig::Tiny(), run, SmallCorpus().train), LengthError);
}

TEST(TrainerTest, IdenticalSeedsAreBitIdentical) {
  Trainer a(ModelConfig::Tiny(), SmallRun(4), SmallCorpus().train);
  Trainer b(ModelConfig::Tiny(), SmallRun(4), SmallCorpus().train);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(a.Step().total, b.Step().total);
  }
  EXPECT_TRUE(SameParams(a.model(), b.model()));
  EXPECT_TRUE(EncodeCheckpoint(a.model(), a.optimizer(), a.run(), a.step()) ==
              EncodeCheckpoint(b.model(), b.optimizer(), b.run(), b.step()));
}

TEST(TrainerTest, DifferentSeedsDiffer) {
  TrainRunConfig other = SmallRun(2);
  other.seed = 4;
  Trainer a(ModelConfig::Tiny(), SmallRun(2), SmallCorpus().train);
  Trainer b(ModelConfig::Tiny(), other, SmallCorpus().train);
  a.Step();
  b.Step();
  EXPECT_FALSE(SameParams(a.model(), b.model()));
}

TEST(TrainerTest, ResumeMatchesUninterruptedRun) {
  Trainer full(ModelConfig::Tiny(), SmallRun(6), SmallCorpus().train);
  for (int i = 0; i < 6; ++i) full.Step();

  Trainer first(ModelConfig::Tiny(), SmallRun(6), SmallCorpus().train);
  for (int i = 0; i < 3; ++i) first.Step();
  Checkpoint ckpt = DecodeCheckpoint(
      EncodeCheckpoint(first.model(), first.optimizer(), first.run(), first.step()));
  Trainer resumed(std::move(ckpt.model), std::move(ckpt.optimizer), ckpt.step,
                  ckpt.run, SmallCorpus().train);
  for (int i = 0; i < 3; ++i) resumed.Step();

  EXPECT_EQ(resumed.step(), 6);
  EXPECT_TRUE(EncodeCheckpoint(full.model(), full.optimizer(), full.run(), 6) ==
              EncodeCheckpoint(resumed.model(), resumed.optimizer(), resumed.run(), 6));
}

TEST(TrainerTest, RunTrainingFilesResumeBitExact) {
  const fs::path a = TempDir("full"), b = TempDir("resumed");
  Trainer full(ModelConfig::Tiny(), SmallRun(6), SmallCorpus().train,
               &SmallCorpus().valid);
  RunTraining(full, ModelConfig::Tiny(), a);

  Trainer part(ModelConfig::Tiny(), SmallRun(4), SmallCorpus().train,
               &SmallCorpus().valid);
  RunTraining(part, ModelConfig::Tiny(), b);
  Checkpoint ckpt = LoadCheckpoint(b / "ckpt-00000004.svck");
  Trainer rest(std::move(ckpt.model), std::move(ckpt.optimizer), ckpt.step,
               SmallRun(6), SmallCorpus().train, &SmallCorpus().valid);
  RunTraining(rest, ModelConfig::Tiny(), b);

  for (const char* f : {"final.svck", "ckpt-00000006.svck", "loss.tsv", "valid.tsv"}) {
    EXPECT_TRUE(ReadFile(a / f) == ReadFile(b / f)) << f;
  }
}

TEST(TrainerTest, LossLogHasOneLinePerStep) {
  const fs::path dir = TempDir("log");
  Trainer t(ModelConfig::Tiny(), SmallRun(5), SmallCorpus().train);
  const TrainOutcome out = RunTraining(t, ModelConfig::Tiny(), dir);
  EXPECT_EQ(out.steps_completed, 5);
  std::ifstream in(dir / "loss.tsv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 6);  // header + 5 steps
  EXPECT_TRUE(fs::exists(dir / "final.svck"));
}

TEST(TrainerTest, NonFiniteLossSavesLastGoodState) {
  const fs::path dir = TempDir("nan");
  Trainer t(ModelConfig::Tiny(), SmallRun(3), SmallCorpus().train);
  t.Step();
  t.model().params().Get("decoder.output.bias").mutable_values()[0] = NAN;
  EXPECT_THROW(RunTraining(t, ModelConfig::Tiny(), dir), NumericError);
  EXPECT_EQ(t.step(), 1);
  EXPECT_TRUE(fs::exists(dir / "last-good.svck"));
}

TEST(TrainerTest, SmokeRunReducesReconstruction) {
  TrainRunConfig run = SmallRun(200);
  run.batch_size = 8;
  run.crop_frames = 64;
  Trainer t(ModelConfig::Tiny(), run, SmallCorpus().train);
  const double first = t.Step().reconstruction;
  double last = first;
  for (int i = 1; i < 200; ++i) last = t.Step().reconstruction;
  EXPECT_LT(last, first);
}

TEST(TrainerTest, ClosedGateStillReportsKl) {
  TrainRunConfig run = SmallRun(60);
  run.beta_c = 0.0;
  run.beta_s = 0.0;
  Trainer t(ModelConfig::Tiny(), run, SmallCorpus().train);
  const LossBreakdown first = t.Step();
  LossBreakdown last = first;
  for (int i = 1; i < 60; ++i) last = t.Step();
  EXPECT_GT(last.content_kl, 0.0);
  EXPECT_GT(last.speaker_kl, 0.0);
  EXPECT_EQ(last.total, last.reconstruction);
  EXPECT_LT(last.reconstruction, first.reconstruction);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  Trainer t(ModelConfig::Tiny(), SmallRun(2), SmallCorpus().train);
  t.Step();
  t.Step();
  const std::string bytes =
      EncodeCheckpoint(t.model(), t.optimizer(), t.run(), t.step());
  const Checkpoint c = DecodeCheckpoint(bytes);
  EXPECT_EQ(c.step, 2);
  EXPECT_EQ(c.model_config, ModelConfig::Tiny());
  EXPECT_EQ(c.run, t.run());
  EXPECT_TRUE(SameParams(c.model, t.model()));
  EXPECT_EQ(c.optimizer.m, t.optimizer().m);
  EXPECT_EQ(c.optimizer.v, t.optimizer().v);
  EXPECT_TRUE(EncodeCheckpoint(c.model, c.optimizer, c.run, c.step) == bytes);
}

TEST(CheckpointTest, FreshOptimizerRoundTrip) {
  Model<float> m(ModelConfig::Tiny(), 1);
  AdamState<float> opt;
  const Checkpoint c = DecodeCheckpoint(EncodeCheckpoint(m, opt, SmallRun(1), 0));
  EXPECT_TRUE(SameParams(c.model, m));
  EXPECT_EQ(c.optimizer.step, 0);
}

TEST(CheckpointTest, CorruptionIsDetected) {
  Model<float> m(ModelConfig::Tiny(), 1);
  const std::string bytes = EncodeCheckpoint(m, AdamState<float>{}, SmallRun(1), 0);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(DecodeCheckpoint(bad), FormatError);
  bad = bytes;
  bad[8] = 2;
  EXPECT_THROW(DecodeCheckpoint(bad), VersionError);
  EXPECT_THROW(DecodeCheckpoint(bytes.substr(0, bytes.size() - 4)), FormatError);
  EXPECT_THROW(DecodeCheckpoint(bytes.substr(0, 10)), FormatError);
  EXPECT_THROW(DecodeCheckpoint(bytes + "junk"), FormatError);
}

TEST(CheckpointTest, VersionErrorNamesFile) {
  const fs::path dir = TempDir("version");
  Model<float> m(ModelConfig::Tiny(), 1);
  std::string bytes = EncodeCheckpoint(m, AdamState<float>{}, SmallRun(1), 0);
  bytes[8] = 7;
  std::ofstream(dir / "v.svck", std::ios::binary) << bytes;
  try {
    LoadCheckpoint(dir / "v.svck");
    FAIL();
  } catch (const VersionError& e) {
    EXPECT_NE(std::string(e.what()).find("v.svck"), std::string::npos);
  }
}

TEST(CheckpointTest, ConfigJsonRoundTrip) {
  const ModelConfig m = ModelConfig::PaperDims();
  EXPECT_EQ(ModelConfigFromJson(ModelConfigToJson(m)), m);
  TrainRunConfig r = SmallRun(9);
  r.beta_s = 1e-7;
  EXPECT_EQ(TrainRunConfigFromJson(TrainRunConfigToJson(r)), r);
}

TEST(TuneScheduleTest, TableGridOrder) {
  const auto order =
      TuneScheduleHint(TuneGrid{{1e-3, 1e-2}, {1e-5, 1e-4, 1e-3}});
  ASSERT_EQ(order.size(), 6u);
  // Largest beta_c first, and beta_s scaled with beta_c at first.
  EXPECT_EQ(order[0].beta_c, 1e-2);
  EXPECT_EQ(order[0].beta_s, 1e-4);
  EXPECT_EQ(order[1].beta_c, 1e-3);
  EXPECT_EQ(order[1].beta_s, 1e-5);
  std::set<std::pair<double, double>> cells;
  for (const auto& w : order) cells.insert({w.beta_c, w.beta_s});
  EXPECT_EQ(cells.size(), 6u);
}

TEST(TuneScheduleTest, EmptyGridGivesProportionalLadder) {
  const auto order = TuneScheduleHint(TuneGrid{});
  ASSERT_EQ(order.size(), 5u);
  EXPECT_EQ(order[0].beta_c, 0.1);
  for (size_t i = 0; i < order.size(); ++i) {
    EXPECT_NEAR(order[i].beta_s / order[i].beta_c, 1e-2, 1e-15);
    if (i) EXPECT_LT(order[i].beta_c, order[i - 1].beta_c);
  }
}

TEST(TuneScheduleTest, SingleCell) {
  const auto order = TuneScheduleHint(TuneGrid{{3e-3}, {1e-7}});
  ASSERT_EQ(order.size(), 1u);
  EXPECT_EQ(order[0].beta_c, 3e-3);
  EXPECT_EQ(order[0].beta_s, 1e-7);
}

}  // namespace
}  // namespace svae
