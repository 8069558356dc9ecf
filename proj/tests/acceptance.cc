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


// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Artifacts go to argv[1]
// (default: ./acceptance_out).

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "svae/checkpoint.h"
#include "svae/data.h"
#include "svae/eval.h"
#include "svae/objective.h"
#include "svae/rng.h"
#include "svae/run_config.h"
#include "svae/trainer.h"
#include "svae/verify.h"

namespace svae {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Criteria 1 to 4 reuse the self-check suites; every check must pass.
Outcome SuiteOutcome(const std::string& suite, double* seconds = nullptr) {
  const auto start = Clock::now();
  const auto results = RunVerifySuite(suite, 1);
  if (seconds) *seconds = Seconds(start);
  Outcome o{true, ""};
  int failed = 0;
  for (const CheckResult& r : results) {
    if (!r.passed) {
      o.passed = false;
      ++failed;
      o.detail += " [" + r.name + ": " + r.detail + "]";
    }
  }
  o.detail = std::to_string(results.size() - failed) + "/" +
             std::to_string(results.size()) + " checks pass" + o.detail;
  return o;
}

Outcome GradientFidelity() {
  double seconds = 0;
  Outcome o = SuiteOutcome("gradients", &seconds);
  o.detail += ", " + Fmt(seconds) + " s";
  if (seconds >= 120) {
    o.passed = false;
    o.detail += " (over the 120 s budget)";
  }
  return o;
}

Outcome BetaVaeReduction() {
  double worst = 0;
  int trials = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Model<double> model(ModelConfig::Tiny(), seed);
    Rng data(seed + 100);
    Buffer<double> values(2 * 96 * 16);
    for (double& v : values) v = data.Normal();
    const TensorD x = TensorD::FromBuffer({2, 96, 16}, std::move(values));
    for (double beta : {1e-5, 1e-3, 0.1, 1.0, 3.0}) {
      Rng shuffle = MakeStream(seed, Stream::kShuffle);
      Rng dropout = MakeStream(seed, Stream::kDropout);
      Rng reparam = MakeStream(seed, Stream::kReparam);
      const LossBreakdown b =
          TotalLoss(model, x, {beta, beta}, true,
                    LossStreams{&shuffle, &dropout, &reparam})
              .breakdown;
      const double expected =
          b.reconstruction + beta * (b.content_kl + b.speaker_kl);
      const double ulps = std::abs(b.total - expected) /
                          (std::numeric_limits<double>::epsilon() * std::abs(expected));
      worst = std::max(worst, ulps);
      ++trials;
    }
  }
  return {worst <= 4.0, std::to_string(trials) + " random cases, worst deviation " +
                            Fmt(worst) + " ulp (limit 4)"};
}

struct SweepState {
  RunConfig config;
  SynthCorpus corpus;
  SweepTable table;
  SweepVerdicts verdicts;
  fs::path out;
};

Outcome DisentanglementTrend(SweepState& s) {
  const auto start = Clock::now();
  s.corpus = GenerateSyntheticCorpus(s.config.synth, s.config.seed);
  const auto cells = TuneScheduleHint(
      TuneGrid{s.config.eval.grid_beta_c, s.config.eval.grid_beta_s});
  s.table = RunSweep(cells, MakeTrainEvalRunner(s.config.model, s.config.train,
                                                s.corpus, s.out, s.config.seed));
  const double seconds = Seconds(start);
  const std::string tsv = SweepTableTsv(s.table);
  std::ofstream(s.out / "sweep.tsv") << tsv;
  s.verdicts = ComputeVerdicts(s.table);
  std::ofstream(s.out / "sweep.json")
      << SweepReportJson(s.table, s.verdicts).dump(2) << '\n';
  std::cout << tsv;

  Outcome o{true, ""};
  for (const SweepRow& row : s.table.rows) {
    if (row.failed) {
      o.passed = false;
      o.detail += "cell failed: " + row.failure + "; ";
    }
  }
  // The verdicts must follow from the emitted table alone.
  const SweepVerdicts reparsed = ComputeVerdicts(ParseSweepTsv(Slurp(s.out / "sweep.tsv")));
  if (reparsed.content_vs_beta_c.holds != s.verdicts.content_vs_beta_c.holds ||
      reparsed.speaker_vs_beta_s.holds != s.verdicts.speaker_vs_beta_s.holds ||
      reparsed.best_row != s.verdicts.best_row) {
    o.passed = false;
    o.detail += "verdicts differ when recomputed from sweep.tsv; ";
  }
  for (const TrendVerdict* v :
       {&s.verdicts.content_vs_beta_c, &s.verdicts.speaker_vs_beta_s}) {
    o.detail += "(" + v->name + ": " + (v->holds ? "holds" : "violated") + ") ";
    if (!v->holds) {
      o.passed = false;
      for (const std::string& why : v->violations) o.detail += "[" + why + "] ";
    }
  }
  if (s.verdicts.best_row < 0) {
    return {false, o.detail + "no completed cell"};
  }
  const EvalReport& best = s.table.rows[s.verdicts.best_row].report;
  o.detail += "best cell beta_c=" + Fmt(best.beta_c) + " beta_s=" + Fmt(best.beta_s) + ":";
  for (Language l : {Language::kA, Language::kB}) {
    const double zc = best.cell(Representation::kContent, l).eer;
    const double zs = best.cell(Representation::kSpeaker, l).eer;
    o.detail += " " + std::string(1, LanguageLabel(l)) + " z_c=" + Fmt(zc) + " z_s=" + Fmt(zs);
    if (!(zs <= 0.15 && zc >= 0.35)) {
      o.passed = false;
      o.detail += " (needs z_s<=0.15, z_c>=0.35)";
    }
  }
  o.detail += "; " + Fmt(seconds / 60) + " min";
  if (seconds >= 7200) {
    o.passed = false;
    o.detail += " (over the 2 h budget)";
  }
  return o;
}

Outcome ConversionTransfer(const SweepState& s) {
  if (s.verdicts.best_row < 0) return {false, "no trained best cell"};
  const SweepRow& best = s.table.rows[s.verdicts.best_row];
  const Checkpoint ckpt =
      LoadCheckpoint(SweepCellDir(s.out, {best.beta_c, best.beta_s}) / "final.svck");
  const ConversionProbeResult r = ConversionProbe(
      ckpt.model, s.corpus, Split::kTest, s.config.eval.probe_pairs, s.config.seed);
  const bool ok = r.intra_score >= 0.9 && r.cross_score >= 0.75;
  return {ok, "intra " + Fmt(r.intra_score) + " (>= 0.9, " +
                  std::to_string(r.intra_pairs) + " pairs), cross " +
                  Fmt(r.cross_score) + " (>= 0.75, " +
                  std::to_string(r.cross_pairs) + " pairs)"};
}

Outcome Reproducibility(const fs::path& out) {
  RunConfig config = PresetRunConfig("tiny");
  config.synth.train_speakers_per_language = 4;
  config.synth.valid_speakers_per_language = 1;
  config.synth.test_speakers_per_language = 2;
  config.synth.utterances_per_speaker = 6;
  config.train.steps = 40;
  config.train.checkpoint_every = 20;
  config.train.validate_every = 10;
  config.train.progress_every = 0;
  const SynthCorpus corpus = GenerateSyntheticCorpus(config.synth, config.seed);
  auto train = [&](const fs::path& dir) {
    fs::remove_all(dir);
    Trainer t(config.model, config.train, corpus.train, &corpus.valid);
    return RunTraining(t, config.model, dir).final_checkpoint;
  };
  Outcome o{true, ""};
  auto check = [&](bool ok, const std::string& what) {
    o.detail += what + (ok ? " ok; " : " MISMATCH; ");
    o.passed = o.passed && ok;
  };
  const fs::path a = train(out / "repro-a");
  const fs::path b = train(out / "repro-b");
  check(Slurp(a) == Slurp(b), "identical seeds give identical checkpoints");

  const fs::path mid = out / "repro-a" / "ckpt-00000020.svck";
  Checkpoint ckpt = LoadCheckpoint(mid);
  const fs::path resumed_dir = out / "repro-resumed";
  fs::remove_all(resumed_dir);
  Trainer resumed(std::move(ckpt.model), std::move(ckpt.optimizer), ckpt.step,
                  config.train, corpus.train, &corpus.valid);
  const fs::path c = RunTraining(resumed, config.model, resumed_dir).final_checkpoint;
  check(Slurp(a) == Slurp(c), "resume from step 20 matches the uninterrupted run");

  const Checkpoint loaded = LoadCheckpoint(a);
  check(EncodeCheckpoint(loaded.model, loaded.optimizer, loaded.run, loaded.step) ==
            Slurp(a),
        "checkpoint round trip");

  bool features_ok = true;
  Rng rng(77);
  for (const Utterance& u : corpus.test) {
    FeatureMatrix m = u.features;
    m.values[rng.UniformInt(0, m.values.size() - 1)] = -0.0f;
    m.values[0] = std::numeric_limits<float>::denorm_min();
    const fs::path p = out / "roundtrip.svf";
    WriteFeatureFile(p, m);
    const FeatureMatrix back = ReadFeatureFile(p);
    features_ok = features_ok && back == m && EncodeFeatures(back) == Slurp(p);
  }
  check(features_ok, "feature-file round trip of " +
                         std::to_string(corpus.test.size()) + " utterances");
  return o;
}

int Main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::create_directories(out);

  SweepState sweep;
  sweep.config = PresetRunConfig("tiny");
  sweep.out = out / "sweep";
  fs::remove_all(sweep.out);
  fs::create_directories(sweep.out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 gradient fidelity", GradientFidelity},
      {"2 KL oracle", [] { return SuiteOutcome("kl"); }},
      {"3 MI bound", [] { return SuiteOutcome("mi-bound"); }},
      {"4 EER oracle", [] { return SuiteOutcome("eer-oracle"); }},
      {"5 beta-VAE reduction", BetaVaeReduction},
      {"6 disentanglement trend", [&] { return DisentanglementTrend(sweep); }},
      {"7 conversion probe", [&] { return ConversionTransfer(sweep); }},
      {"8 reproducibility", [&] { return Reproducibility(out); }},
  };
  std::vector<std::string> lines;
  bool all = true;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    const auto start = Clock::now();
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.passed;
    lines.push_back(std::string(o.passed ? "PASS" : "FAIL") + "\tcriterion " + name +
                    "\t" + o.detail);
    std::cout << lines.back() << "\t(" << Fmt(Seconds(start)) << " s)" << std::endl;
  }
  std::cout << "\nsummary\n";
  for (const std::string& l : lines) std::cout << l << "\n";
  return all ? 0 : 1;
}

}  // namespace
}  // namespace svae

int main(int argc, char** argv) { return svae::Main(argc, argv); }
