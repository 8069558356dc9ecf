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

#ifndef SVAE_EVAL_H_
#define SVAE_EVAL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "svae/data.h"
#include "svae/model.h"
#include "svae/objective.h"
#include "svae/trainer.h"

namespace svae {

enum class Representation { kContent, kSpeaker };

// "z_c" or "z_s".
std::string RepresentationName(Representation r);
Representation ParseRepresentation(const std::string& name);

// Inference-mode utterance embedding: the speaker posterior mean, or the
// time-mean of the per-frame content posterior means.
std::vector<double> UtteranceEmbedding(const Model<float>& model,
                                       const FeatureMatrix& features,
                                       Representation which);

// Zero when either vector has zero norm.
double CosineSimilarity(std::span<const double> a, std::span<const double> b);

// Equal error rate with acceptance at score >= threshold. Sweeps the
// distinct pooled scores in increasing order (plus one threshold above the
// maximum) and linearly interpolates FAR - FRR where it first reaches zero.
// Throws ProtocolError when either list is empty.
double ComputeEer(std::span<const double> positive_scores,
                  std::span<const double> negative_scores);

inline constexpr int kEnrollmentUtterances = 4;

struct EerCell {
  Representation representation = Representation::kContent;
  Language language = Language::kA;
  double eer = 0.0;
  int64_t positives = 0;
  int64_t negatives = 0;
};

struct EvalReport {
  double beta_c = 0.0;
  double beta_s = 0.0;
  std::vector<EerCell> cells;  // z_c/A, z_c/B, z_s/A, z_s/B
  const EerCell& cell(Representation r, Language l) const;
};

struct LabeledEmbedding {
  std::string speaker_id;
  Language language = Language::kA;
  std::vector<double> embedding;
};

// Verification trials within one language: per speaker (in id order), four
// enrollment utterances drawn from a stream keyed by (seed, language,
// speaker rank) are averaged into the enrollment vector; the speaker's other
// utterances are positive trials and every other speaker's non-enrollment
// utterances are negative trials, scored by cosine similarity. Throws
// ProtocolError naming any speaker with fewer than five utterances.
EerCell ScoreTrials(std::span<const LabeledEmbedding> items, Language language,
                    Representation representation, uint64_t seed);

// Runs ScoreTrials for both representations and both languages.
EvalReport SvProtocol(const Model<float>& model,
                      const std::vector<Utterance>& test, uint64_t seed,
                      const LossWeights& weights = {});

struct SweepRow {
  double beta_c = 0.0;
  double beta_s = 0.0;
  bool failed = false;
  std::string failure;
  EvalReport report;
};

struct SweepTable {
  std::vector<SweepRow> rows;
};

struct TrendVerdict {
  std::string name;
  bool holds = true;
  std::vector<std::string> violations;
};

struct SweepVerdicts {
  // z_c EER non-decreasing in beta_c at every beta_s.
  TrendVerdict content_vs_beta_c;
  // z_s EER non-decreasing in beta_s at every beta_c.
  TrendVerdict speaker_vs_beta_s;
  // z_c EER non-increasing in beta_s at every beta_c (reported only).
  TrendVerdict content_vs_beta_s;
  // Index of the row maximizing the mean over languages of
  // eer(z_c) - eer(z_s); -1 when every row failed.
  int best_row = -1;
};

// Computed from the table alone, per language. Failed cells are skipped.
SweepVerdicts ComputeVerdicts(const SweepTable& table);

using CellRunner = std::function<EvalReport(const LossWeights& weights)>;

// Runs every cell in order; a throwing cell is marked failed and the sweep
// continues.
SweepTable RunSweep(std::span<const LossWeights> cells, const CellRunner& run);

// Tab-separated rows: beta_c, beta_s, representation, language, eer,
// n_pos, n_neg; failed cells carry "failed" in the eer column.
std::string SweepTableTsv(const SweepTable& table);
SweepTable ParseSweepTsv(const std::string& text);
nlohmann::ordered_json SweepReportJson(const SweepTable& table,
                                       const SweepVerdicts& verdicts);
nlohmann::ordered_json EvalReportJson(const EvalReport& report);
std::string EvalReportTsv(const EvalReport& report);

// Trains one model per cell on corpus.train (validation on corpus.valid)
// under out_root/cell-<beta_c>-<beta_s>/ and evaluates it on corpus.test.
CellRunner MakeTrainEvalRunner(const ModelConfig& model_config,
                               const TrainRunConfig& base_run,
                               const SynthCorpus& corpus,
                               const std::filesystem::path& out_root,
                               uint64_t eval_seed);
std::filesystem::path SweepCellDir(const std::filesystem::path& out_root,
                                   const LossWeights& weights);

struct ConversionProbeResult {
  double intra_score = 0.0;
  double cross_score = 0.0;
  int64_t intra_pairs = 0;
  int64_t cross_pairs = 0;
  // Set when either score is within 0.1 of chance.
  bool near_chance = false;
};

// Samples (source, target) pairs of distinct speakers from `split`, half
// within a language and half across. For each pair the time-mean of
// Convert(source, target) is compared against the noiseless time-mean the
// generative model assigns to the source content rendered with the target
// speaker (d_tgt) and with the source speaker (d_src). Scores are the
// fractions of pairs with d_tgt < d_src.
ConversionProbeResult ConversionProbe(const Model<float>& model,
                                      const SynthCorpus& corpus, Split split,
                                      int64_t pairs_per_kind, uint64_t seed);

}  // namespace svae

#endif  // SVAE_EVAL_H_
