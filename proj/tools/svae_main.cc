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

// svae command-line driver.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <string>

#include "CLI11.hpp"
#include "svae/checkpoint.h"
#include "svae/data.h"
#include "svae/errors.h"
#include "svae/eval.h"
#include "svae/run_config.h"
#include "svae/trainer.h"
#include "svae/verify.h"

namespace fs = std::filesystem;

namespace svae {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<uint64_t> seed;
  std::optional<std::string> preset;
  std::string out;
  bool force = false;
};

void AddCommonFlags(CLI::App* cmd, CommonFlags& flags, bool out_required) {
  cmd->add_option("--config", flags.config, "run configuration file (INI)");
  cmd->add_option("--seed", flags.seed, "master seed; overrides the config");
  cmd->add_option("--preset", flags.preset, "tiny | paper-dims; overrides the config");
  auto* out = cmd->add_option("--out", flags.out, "output location");
  if (out_required) out->required();
  cmd->add_flag("--force", flags.force,
                "overwrite known artifacts in a non-empty output directory");
}

RunConfig ResolveConfig(const CommonFlags& flags) {
  std::optional<fs::path> path;
  if (flags.config) path = *flags.config;
  return LoadRunConfig(path, flags.preset, flags.seed);
}

bool IsKnownArtifact(const std::string& name) {
  static const std::regex known(
      R"(config\.ini|features|speakers\.tsv|manifest_(train|valid|test)\.tsv|)"
      R"(loss\.tsv|valid\.tsv|ckpt-\d+\.svck|final\.svck|last-good\.svck|)"
      R"(eval\.tsv|eval\.json|probe\.json|sweep\.tsv|sweep\.json|cell-.*)");
  return std::regex_match(name, known);
}

// Refuses a non-empty directory unless forced; with force, removes only
// the files this tool writes.
void PrepareOutDir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw ConfigError("output path " + dir.string() + " is not a directory");
  }
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) {
      throw ConfigError("output directory " + dir.string() +
                        " is not empty; pass --force to overwrite");
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (IsKnownArtifact(name)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

void EchoConfig(const fs::path& dir, const RunConfig& config) {
  std::ofstream(dir / "config.ini") << RenderRunConfig(config);
}

struct LoadedData {
  // Synthetic corpora carry ground truth; manifest corpora fill only the
  // utterance lists.
  SynthCorpus corpus;
};

LoadedData LoadData(const RunConfig& config) {
  LoadedData data;
  if (config.synthetic()) {
    data.corpus = GenerateSyntheticCorpus(config.synth, config.seed);
    return data;
  }
  const fs::path dir = config.manifest_dir;
  std::vector<CorpusManifest> manifests;
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    manifests.push_back(
        ReadManifest(dir / ("manifest_" + SplitName(s) + ".tsv"), s));
  }
  CheckSpeakerDisjoint(manifests);
  data.corpus.train = LoadUtterances(manifests[0], dir);
  data.corpus.valid = LoadUtterances(manifests[1], dir);
  data.corpus.test = LoadUtterances(manifests[2], dir);
  return data;
}

std::vector<Utterance> LoadTestSplit(const fs::path& dir) {
  const auto manifest =
      ReadManifest(dir / "manifest_test.tsv", Split::kTest);
  return LoadUtterances(manifest, dir);
}

nlohmann::ordered_json ProbeJson(const ConversionProbeResult& r) {
  nlohmann::ordered_json j;
  j["intra_score"] = r.intra_score;
  j["cross_score"] = r.cross_score;
  j["intra_pairs"] = r.intra_pairs;
  j["cross_pairs"] = r.cross_pairs;
  j["near_chance"] = r.near_chance;
  return j;
}

int CmdGenData(const CommonFlags& flags) {
  const RunConfig config = ResolveConfig(flags);
  if (!config.synthetic()) {
    throw ConfigError("gen-data needs data.source = synthetic");
  }
  const fs::path out = flags.out;
  PrepareOutDir(out, flags.force);
  const SynthCorpus corpus = GenerateSyntheticCorpus(config.synth, config.seed);
  const CorpusSummary summary = WriteCorpus(corpus, out);
  EchoConfig(out, config);
  std::cout << "speakers\t" << summary.speakers << "\nutterances\t"
            << summary.utterances << "\nframes\t" << summary.frames << "\n";
  return kExitOk;
}

int CmdTrain(const CommonFlags& flags, const std::optional<std::string>& resume) {
  const RunConfig config = ResolveConfig(flags);
  const fs::path out = flags.out;
  if (resume) {
    fs::create_directories(out);
  } else {
    PrepareOutDir(out, flags.force);
  }
  const LoadedData data = LoadData(config);
  std::optional<Trainer> trainer;
  if (resume) {
    Checkpoint ckpt = LoadCheckpoint(*resume);
    if (!(ckpt.model_config == config.model)) {
      throw ConfigError("checkpoint " + *resume +
                        " was written with a different model configuration");
    }
    // Only the step budget may change on resume.
    TrainRunConfig saved = ckpt.run;
    saved.steps = config.train.steps;
    if (!(saved == config.train)) {
      throw ConfigError("checkpoint " + *resume +
                        " was written with a different train configuration");
    }
    trainer.emplace(std::move(ckpt.model), std::move(ckpt.optimizer), ckpt.step,
                    config.train, data.corpus.train, &data.corpus.valid);
  } else {
    trainer.emplace(config.model, config.train, data.corpus.train,
                    &data.corpus.valid);
  }
  EchoConfig(out, config);
  const TrainOutcome outcome = RunTraining(*trainer, config.model, out);
  std::cout << "steps\t" << outcome.steps_completed << "\nfinal_loss\t"
            << outcome.last_loss.total << "\ncheckpoint\t"
            << outcome.final_checkpoint.string() << "\n";
  return kExitOk;
}

int CmdEval(const CommonFlags& flags, const std::string& checkpoint,
            const std::optional<std::string>& manifest, bool probe) {
  const RunConfig config = ResolveConfig(flags);
  Checkpoint ckpt = LoadCheckpoint(checkpoint);
  const LossWeights weights{ckpt.run.beta_c, ckpt.run.beta_s};
  std::optional<SynthCorpus> corpus;
  std::vector<Utterance> test;
  if (manifest) {
    test = LoadTestSplit(*manifest);
  } else {
    corpus = LoadData(config).corpus;
    test = corpus->test;
  }
  const EvalReport report = SvProtocol(ckpt.model, test, config.seed, weights);
  nlohmann::ordered_json j = EvalReportJson(report);
  if (probe) {
    if (manifest || !config.synthetic()) {
      throw ConfigError("--probe needs the synthetic corpus (ground truth)");
    }
    j["conversion_probe"] = ProbeJson(ConversionProbe(
        ckpt.model, *corpus, Split::kTest, config.eval.probe_pairs, config.seed));
  }
  if (!flags.out.empty()) {
    const fs::path out = flags.out;
    PrepareOutDir(out, flags.force);
    EchoConfig(out, config);
    std::ofstream(out / "eval.tsv") << EvalReportTsv(report);
    std::ofstream(out / "eval.json") << j.dump(2) << '\n';
  }
  std::cout << EvalReportTsv(report);
  if (probe) {
    std::cout << "probe\t" << j["conversion_probe"].dump() << "\n";
  }
  return kExitOk;
}

int CmdSweep(const CommonFlags& flags) {
  const RunConfig config = ResolveConfig(flags);
  const fs::path out = flags.out;
  PrepareOutDir(out, flags.force);
  EchoConfig(out, config);
  const LoadedData data = LoadData(config);
  const auto cells = TuneScheduleHint(
      TuneGrid{config.eval.grid_beta_c, config.eval.grid_beta_s});
  const SweepTable table = RunSweep(
      cells, MakeTrainEvalRunner(config.model, config.train, data.corpus, out,
                                 config.seed));
  const SweepVerdicts verdicts = ComputeVerdicts(table);
  std::ofstream(out / "sweep.tsv") << SweepTableTsv(table);
  nlohmann::ordered_json report = SweepReportJson(table, verdicts);
  if (verdicts.best_row >= 0 && config.synthetic() &&
      config.eval.probe_pairs > 0) {
    const SweepRow& best = table.rows[verdicts.best_row];
    const fs::path ckpt_path =
        SweepCellDir(out, {best.beta_c, best.beta_s}) / "final.svck";
    const Checkpoint ckpt = LoadCheckpoint(ckpt_path);
    nlohmann::ordered_json probe = ProbeJson(ConversionProbe(
        ckpt.model, data.corpus, Split::kTest, config.eval.probe_pairs,
        config.seed));
    probe["beta_c"] = best.beta_c;
    probe["beta_s"] = best.beta_s;
    std::ofstream(out / "probe.json") << probe.dump(2) << '\n';
    report["conversion_probe"] = probe;
  }
  std::ofstream(out / "sweep.json") << report.dump(2) << '\n';
  std::cout << SweepTableTsv(table);
  for (const TrendVerdict* v : {&verdicts.content_vs_beta_c,
                                &verdicts.speaker_vs_beta_s,
                                &verdicts.content_vs_beta_s}) {
    std::cout << "trend\t" << v->name << '\t' << (v->holds ? "holds" : "violated")
              << "\n";
  }
  return kExitOk;
}

int CmdConvert(const CommonFlags& flags, const std::string& checkpoint,
               const std::string& source, const std::string& target) {
  if (flags.out.empty()) throw ConfigError("convert needs --out <file>");
  const Checkpoint ckpt = LoadCheckpoint(checkpoint);
  const FeatureMatrix src = ReadFeatureFile(source);
  const FeatureMatrix tgt = ReadFeatureFile(target);
  TensorF converted;
  {
    NoGradGuard no_grad;
    converted = ckpt.model.Convert(src.ToTensor<float>(), tgt.ToTensor<float>());
  }
  FeatureMatrix result;
  result.frames = converted.dim(0);
  result.dim = converted.dim(1);
  result.values.assign(converted.values().begin(), converted.values().end());
  if (fs::exists(flags.out) && !flags.force) {
    throw ConfigError("output file " + flags.out +
                      " exists; pass --force to overwrite");
  }
  WriteFeatureFile(flags.out, result);
  std::cout << "frames\t" << result.frames << "\ndim\t" << result.dim << "\n";
  return kExitOk;
}

int CmdVerify(const CommonFlags& flags, const std::string& suite) {
  const uint64_t seed = flags.seed.value_or(1);
  std::vector<std::string> suites;
  if (suite == "all") {
    suites = VerifySuiteNames();
  } else {
    suites.push_back(suite);
  }
  int failed = 0;
  for (const std::string& s : suites) {
    for (const CheckResult& r : RunVerifySuite(s, seed)) {
      std::cout << (r.passed ? "PASS" : "FAIL") << '\t' << r.suite << '\t'
                << r.name << '\t' << r.detail << std::endl;
      if (!r.passed) ++failed;
    }
  }
  if (failed > 0) {
    std::cerr << "error\tverify\t" << failed << " check(s) failed\n";
    return kExitValidation;
  }
  return kExitOk;
}

std::string ErrorKind(const std::exception& e) {
  if (dynamic_cast<const VersionError*>(&e)) return "version";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const LengthError*>(&e)) return "length";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const SampleSizeError*>(&e)) return "sample-size";
  if (dynamic_cast<const ProtocolError*>(&e)) return "protocol";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  return "internal";
}

std::string OneLine(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\t') c = ' ';
  }
  return s;
}

void ConfigureLogging() {
  // Logs go to stderr so stdout stays machine-readable.
  spdlog::set_default_logger(spdlog::stderr_color_mt("svae"));
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("SVAE_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

int Main(int argc, char** argv) {
  ConfigureLogging();
  CLI::App app{"Speaker/content disentangling VAE toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::optional<std::string> resume, manifest;
  std::string checkpoint, source, target, suite = "all";
  bool probe = false;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic corpus and manifests");
  AddCommonFlags(gen, flags, true);

  auto* train = app.add_subcommand("train", "train one model");
  AddCommonFlags(train, flags, true);
  train->add_option("--resume", resume, "continue from this checkpoint");

  auto* eval = app.add_subcommand("eval", "speaker verification EERs of a checkpoint");
  AddCommonFlags(eval, flags, false);
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--manifest", manifest,
                   "corpus directory holding manifest_test.tsv");
  eval->add_flag("--probe", probe, "also run the conversion probe");

  auto* sweep = app.add_subcommand("sweep", "train and evaluate the beta grid");
  AddCommonFlags(sweep, flags, true);

  auto* convert = app.add_subcommand("convert", "content of --source in the voice of --target");
  AddCommonFlags(convert, flags, true);
  convert->add_option("--checkpoint", checkpoint)->required();
  convert->add_option("--source", source)->required();
  convert->add_option("--target", target)->required();

  auto* verify = app.add_subcommand("verify", "numerical self-checks");
  AddCommonFlags(verify, flags, false);
  std::vector<std::string> suite_choices = VerifySuiteNames();
  suite_choices.push_back("all");
  verify->add_option("--suite", suite)
      ->check(CLI::IsMember(suite_choices));

  auto* print = app.add_subcommand(
      "print-config", "print the resolved configuration with documentation");
  AddCommonFlags(print, flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error\tusage\t" << OneLine(e.what()) << "\n";
    return kExitValidation;
  }

  try {
    if (*gen) return CmdGenData(flags);
    if (*train) return CmdTrain(flags, resume);
    if (*eval) return CmdEval(flags, checkpoint, manifest, probe);
    if (*sweep) return CmdSweep(flags);
    if (*convert) return CmdConvert(flags, checkpoint, source, target);
    if (*verify) return CmdVerify(flags, suite);
    if (*print) {
      std::cout << RenderRunConfig(ResolveConfig(flags));
      return kExitOk;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error\t" << ErrorKind(e) << '\t' << OneLine(e.what()) << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error\t" << ErrorKind(e) << '\t' << OneLine(e.what()) << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace
}  // namespace svae

int main(int argc, char** argv) { return svae::Main(argc, argv); }
