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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "svae/checkpoint.h"
#include "svae/data.h"
#include "svae/errors.h"
#include "svae/run_config.h"

namespace svae {
namespace {

namespace fs = std::filesystem;

std::string ConfigErrorText(std::string_view text) {
  try {
    ParseRunConfig(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfigTest, UnknownKeyIsNamed) {
  const std::string msg = ConfigErrorText("[model]\nhiden_dim = 3\n");
  EXPECT_NE(msg.find("model.hiden_dim"), std::string::npos);
  EXPECT_NE(msg.find("model.hidden_dim"), std::string::npos);
}

TEST(RunConfigTest, MalformedValueIsNamed) {
  EXPECT_NE(ConfigErrorText("[train]\nsteps = ten\n").find("train.steps"),
            std::string::npos);
  EXPECT_NE(ConfigErrorText("[train]\nlearning_rate = 1e-3x\n").find("learning_rate"),
            std::string::npos);
  EXPECT_FALSE(ConfigErrorText("[model]\npositional_encoding = maybe\n").empty());
}

TEST(RunConfigTest, UnknownPresetRejected) {
  EXPECT_THROW(PresetRunConfig("huge"), ConfigError);
  EXPECT_THROW(ParseRunConfig("preset = huge\n"), ConfigError);
}

TEST(RunConfigTest, PresetsValidate) {
  for (const std::string& name : PresetNames()) {
    const RunConfig c = PresetRunConfig(name);
    EXPECT_NO_THROW(c.Validate()) << name;
    EXPECT_EQ(c.preset, name);
  }
  EXPECT_EQ(PresetRunConfig("paper-dims").model, ModelConfig::PaperDims());
  EXPECT_EQ(PresetRunConfig("tiny").model, ModelConfig::Tiny());
}

TEST(RunConfigTest, RenderRoundTrips) {
  for (const std::string& name : PresetNames()) {
    const RunConfig c = PresetRunConfig(name);
    EXPECT_EQ(ParseRunConfig(RenderRunConfig(c)), c) << name;
  }
  RunConfig c = ParseRunConfig(
      "seed = 9\n[train]\nlearning_rate = 0.0003\nbeta_s = 1e-4\n"
      "[eval]\ngrid_beta_s = 1e-5, 1e-3\n[model]\npositional_encoding = false\n");
  EXPECT_EQ(c.train.adam.learning_rate, 0.0003);
  EXPECT_EQ(c.eval.grid_beta_s, (std::vector<double>{1e-5, 1e-3}));
  EXPECT_FALSE(c.model.positional_encoding);
  EXPECT_EQ(ParseRunConfig(RenderRunConfig(c)), c);
}

TEST(RunConfigTest, OverridesTakePrecedence) {
  const RunConfig c = ParseRunConfig("preset = tiny\nseed = 3\n", "paper-dims",
                                     uint64_t{17});
  EXPECT_EQ(c.preset, "paper-dims");
  EXPECT_EQ(c.model, ModelConfig::PaperDims());
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.train.seed, 17u);
  // Keys in the file still apply on top of the overriding preset.
  const RunConfig d = ParseRunConfig("[train]\nsteps = 5\n", "paper-dims");
  EXPECT_EQ(d.train.steps, 5);
}

TEST(RunConfigTest, SeedKeySetsTrainSeed) {
  EXPECT_EQ(ParseRunConfig("seed = 12\n").train.seed, 12u);
}

TEST(RunConfigTest, CrossFieldChecks) {
  EXPECT_FALSE(ConfigErrorText("[train]\ncrop_frames = 200\n").empty());
  EXPECT_FALSE(ConfigErrorText("[data]\nfeature_dim = 20\n").empty());
  EXPECT_FALSE(ConfigErrorText("[data]\nsource = manifest\n").empty());
  EXPECT_FALSE(ConfigErrorText("[data]\nmanifest_dir = /tmp/x\n").empty());
  EXPECT_FALSE(ConfigErrorText("[data]\nsource = wav\n").empty());
  EXPECT_FALSE(ConfigErrorText("[data]\ntest_speakers_per_language = 1\n").empty());
  EXPECT_FALSE(ConfigErrorText("[eval]\ngrid_beta_c =\n").empty());
  EXPECT_FALSE(ConfigErrorText("[model]\ncontent_kernel = 4\n").empty());
  EXPECT_NO_THROW(ParseRunConfig("[data]\nsource = manifest\nmanifest_dir = /tmp/x\n"));
}

TEST(RunConfigTest, AcceptedKeysAreParseable) {
  const auto keys = AcceptedConfigKeys();
  EXPECT_NE(std::find(keys.begin(), keys.end(), "train.beta_c"), keys.end());
  EXPECT_NE(std::find(keys.begin(), keys.end(), "seed"), keys.end());
}

// End-to-end runs of the command-line tool.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::path(::testing::TempDir()) / (std::string("svae_cli_") + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = root_ / "run.ini";
    std::ofstream(config_) << "preset = tiny\nseed = 4\n"
                              "[data]\ntrain_speakers_per_language = 2\n"
                              "valid_speakers_per_language = 1\n"
                              "test_speakers_per_language = 2\n"
                              "utterances_per_speaker = 6\n"
                              "[train]\nsteps = 4\nbatch_size = 2\ncrop_frames = 32\n"
                              "checkpoint_every = 2\nvalidate_every = 2\n"
                              "progress_every = 2\n[eval]\nprobe_pairs = 4\n";
  }

  int Run(const std::string& args) {
    const fs::path log = root_ / "stdout.txt";
    const std::string cmd = "SVAE_LOG_LEVEL=warn '" + std::string(SVAE_CLI_PATH) +
                            "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    output_ = ss.str();
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string Cfg() const { return "--config '" + config_.string() + "'"; }
  std::string Dir(const std::string& name) const { return "'" + (root_ / name).string() + "'"; }

  static std::string Slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path root_, config_;
  std::string output_;
};

TEST_F(CliTest, GenDataIsDeterministicAndDisjoint) {
  ASSERT_EQ(Run("gen-data " + Cfg() + " --out " + Dir("a")), 0) << output_;
  EXPECT_NE(output_.find("speakers\t10"), std::string::npos) << output_;
  ASSERT_EQ(Run("gen-data " + Cfg() + " --out " + Dir("b")), 0) << output_;
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root_ / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root_ / "a");
    EXPECT_TRUE(Slurp(e.path()) == Slurp(root_ / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 10 * 6 + 5);
  std::vector<CorpusManifest> manifests;
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    manifests.push_back(
        ReadManifest(root_ / "a" / ("manifest_" + SplitName(s) + ".tsv"), s));
  }
  EXPECT_NO_THROW(CheckSpeakerDisjoint(manifests));
  EXPECT_EQ(manifests[2].records.size(), 2u * 2 * 6);
}

TEST_F(CliTest, SeedChangesCorpus) {
  ASSERT_EQ(Run("gen-data " + Cfg() + " --out " + Dir("a")), 0) << output_;
  ASSERT_EQ(Run("gen-data " + Cfg() + " --seed 5 --out " + Dir("b")), 0) << output_;
  EXPECT_FALSE(Slurp(root_ / "a" / "speakers.tsv") == Slurp(root_ / "b" / "speakers.tsv"));
}

TEST_F(CliTest, RefusesNonEmptyOutputWithoutForce) {
  ASSERT_EQ(Run("gen-data " + Cfg() + " --out " + Dir("a")), 0) << output_;
  std::ofstream(root_ / "a" / "notes.txt") << "keep";
  EXPECT_EQ(Run("gen-data " + Cfg() + " --out " + Dir("a")), 1);
  EXPECT_NE(output_.find("error\tconfig\t"), std::string::npos) << output_;
  EXPECT_EQ(Run("gen-data " + Cfg() + " --out " + Dir("a") + " --force"), 0) << output_;
  EXPECT_EQ(Slurp(root_ / "a" / "notes.txt"), "keep");
}

TEST_F(CliTest, ConfigErrorsExitWithOne) {
  std::ofstream(root_ / "bad.ini") << "[model]\nbogus = 1\n";
  EXPECT_EQ(Run("gen-data --config " + Dir("bad.ini") + " --out " + Dir("a")), 1);
  EXPECT_NE(output_.find("model.bogus"), std::string::npos) << output_;
  EXPECT_EQ(Run("print-config --preset huge"), 1);
  EXPECT_EQ(Run("no-such-command"), 1);
  EXPECT_EQ(Run("eval " + Cfg()), 1);  // missing --checkpoint
}

TEST_F(CliTest, MissingCheckpointIsAnError) {
  EXPECT_NE(Run("eval " + Cfg() + " --checkpoint " + Dir("none.svck")), 0);
  EXPECT_NE(output_.find("error\t"), std::string::npos) << output_;
}

TEST_F(CliTest, PrintConfigRoundTrips) {
  ASSERT_EQ(Run("print-config " + Cfg() + " --seed 8"), 0) << output_;
  const RunConfig printed = ParseRunConfig(output_);
  EXPECT_EQ(printed, LoadRunConfig(config_, std::nullopt, uint64_t{8}));
}

TEST_F(CliTest, TrainEvalConvertPipeline) {
  ASSERT_EQ(Run("train " + Cfg() + " --out " + Dir("run")), 0) << output_;
  for (const char* f : {"final.svck", "ckpt-00000002.svck", "loss.tsv", "valid.tsv", "config.ini"}) {
    EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
  }
  const std::string ckpt = Dir("run/final.svck");
  ASSERT_EQ(Run("eval " + Cfg() + " --checkpoint " + ckpt + " --probe --out " +
                Dir("ev")),
            0)
      << output_;
  EXPECT_NE(output_.find("probe\t"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "ev" / "eval.json"));

  // Resuming from step 2 reproduces the uninterrupted run.
  const std::string uninterrupted = Slurp(root_ / "run" / "final.svck");
  ASSERT_EQ(Run("train " + Cfg() + " --out " + Dir("run") + " --resume " +
                Dir("run/ckpt-00000002.svck")),
            0)
      << output_;
  EXPECT_NE(output_.find("steps\t2"), std::string::npos) << output_;
  EXPECT_TRUE(Slurp(root_ / "run" / "final.svck") == uninterrupted);

  ASSERT_EQ(Run("gen-data " + Cfg() + " --out " + Dir("data")), 0) << output_;
  const auto test = ReadManifest(root_ / "data" / "manifest_test.tsv", Split::kTest);
  const fs::path src = root_ / "data" / test.records.front().path;
  const fs::path tgt = root_ / "data" / test.records.back().path;
  ASSERT_EQ(Run("convert --checkpoint " + ckpt + " --source '" + src.string() +
                "' --target '" + tgt.string() + "' --out " + Dir("conv.svf")),
            0)
      << output_;
  const FeatureMatrix converted = ReadFeatureFile(root_ / "conv.svf");
  EXPECT_EQ(converted.frames, ReadFeatureFile(src).frames);
  EXPECT_EQ(converted.dim, 16);
  EXPECT_EQ(Run("convert --checkpoint " + ckpt + " --source '" + src.string() +
                "' --target '" + tgt.string() + "' --out " + Dir("conv.svf")),
            1);

  // Eval from the written manifests matches eval from the generator.
  ASSERT_EQ(Run("eval " + Cfg() + " --checkpoint " + ckpt), 0) << output_;
  const std::string from_synth = output_;
  ASSERT_EQ(Run("eval " + Cfg() + " --checkpoint " + ckpt + " --manifest " +
                Dir("data")),
            0)
      << output_;
  EXPECT_EQ(output_, from_synth);
}

TEST_F(CliTest, CorruptCheckpointReportsFormat) {
  std::ofstream(root_ / "bad.svck") << "not a checkpoint";
  EXPECT_EQ(Run("eval " + Cfg() + " --checkpoint " + Dir("bad.svck")), 1);
  EXPECT_NE(output_.find("error\tformat\t"), std::string::npos) << output_;
}

TEST_F(CliTest, VerifySuitePasses) {
  EXPECT_EQ(Run("verify --suite kl"), 0) << output_;
  EXPECT_EQ(output_.rfind("PASS\tkl\t", 0), 0u) << output_;
  EXPECT_EQ(output_.find("FAIL"), std::string::npos);
  EXPECT_EQ(Run("verify --suite nope"), 1);
}

}  // namespace
}  // namespace svae
