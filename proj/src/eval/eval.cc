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

#include "svae/eval.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <spdlog/spdlog.h>
#include <sstream>

#include "svae/errors.h"

namespace svae {

std::string RepresentationName(Representation r) {
  return r == Representation::kContent ? "z_c" : "z_s";
}

Representation ParseRepresentation(const std::string& name) {
  if (name == "z_c") return Representation::kContent;
  if (name == "z_s") return Representation::kSpeaker;
  throw FormatError("unknown representation '" + name + "' (expected z_c|z_s)");
}

namespace {

std::vector<double> TimeMean(const TensorF& sequence) {
  const int64_t frames = sequence.dim(-2);
  const int64_t dim = sequence.dim(-1);
  std::vector<double> out(dim, 0.0);
  auto v = sequence.values();
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t d = 0; d < dim; ++d) out[d] += v[t * dim + d];
  }
  for (double& x : out) x /= static_cast<double>(frames);
  return out;
}

// Shortest text that parses back to the same double.
std::string FormatDouble(double v) {
  char buf[40];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

}  // namespace

std::vector<double> UtteranceEmbedding(const Model<float>& model,
                                       const FeatureMatrix& features,
                                       Representation which) {
  NoGradGuard no_grad;
  const ForwardOptions inference;
  const TensorF x = features.ToTensor<float>();
  if (which == Representation::kSpeaker) {
    const TensorF mean = model.EncodeSpeaker(x, inference).mean;
    return {mean.values().begin(), mean.values().end()};
  }
  return TimeMean(model.EncodeContent(x, inference).mean);
}

double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine similarity of vectors of size " +
                         std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double ComputeEer(std::span<const double> positive_scores,
                  std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty()) {
    throw ProtocolError("EER needs non-empty positive and negative score lists");
  }
  std::vector<double> pos(positive_scores.begin(), positive_scores.end());
  std::vector<double> neg(negative_scores.begin(), negative_scores.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> thresholds;
  thresholds.reserve(pos.size() + neg.size());
  std::merge(pos.begin(), pos.end(), neg.begin(), neg.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  size_t pos_below = 0;  // positives with score < threshold
  size_t neg_below = 0;
  double prev_far = 1.0, prev_frr = 0.0;
  for (size_t k = 0; k <= thresholds.size(); ++k) {
    double far, frr;
    if (k < thresholds.size()) {
      const double th = thresholds[k];
      while (pos_below < pos.size() && pos[pos_below] < th) ++pos_below;
      while (neg_below < neg.size() && neg[neg_below] < th) ++neg_below;
      frr = static_cast<double>(pos_below) / np;
      far = static_cast<double>(neg.size() - neg_below) / nn;
    } else {
      frr = 1.0;
      far = 0.0;
    }
    const double d = far - frr;
    if (d <= 0.0) {
      if (d == 0.0 || k == 0) return far;
      const double d_prev = prev_far - prev_frr;
      const double alpha = d_prev / (d_prev - d);
      return prev_far + alpha * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 0.0;  // unreachable: the last threshold has FAR - FRR = -1
}

const EerCell& EvalReport::cell(Representation r, Language l) const {
  for (const EerCell& c : cells) {
    if (c.representation == r && c.language == l) return c;
  }
  throw ContractError("evaluation report lacks cell " + RepresentationName(r) +
                      "/" + LanguageLabel(l));
}

EerCell ScoreTrials(std::span<const LabeledEmbedding> items, Language language,
                    Representation representation, uint64_t seed) {
  std::map<std::string, std::vector<const LabeledEmbedding*>> by_speaker;
  for (const LabeledEmbedding& item : items) {
    if (item.language == language) by_speaker[item.speaker_id].push_back(&item);
  }
  if (by_speaker.size() < 2) {
    throw ProtocolError(std::string("language ") + LanguageLabel(language) +
                        " needs at least two speakers for verification");
  }
  struct Enrolled {
    std::vector<double> vector;
    std::vector<const LabeledEmbedding*> trials;
  };
  std::map<std::string, Enrolled> enrolled;
  uint64_t rank = 0;
  for (auto& [speaker, utts] : by_speaker) {
    if (utts.size() < kEnrollmentUtterances + 1) {
      throw ProtocolError("speaker " + speaker + " has " +
                          std::to_string(utts.size()) +
                          " utterances; verification needs at least " +
                          std::to_string(kEnrollmentUtterances + 1));
    }
    std::vector<size_t> order(utts.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = MakeStream(seed, Stream::kEval,
                         static_cast<uint64_t>(language), rank++);
    rng.Shuffle(order.begin(), order.end());
    Enrolled e;
    const size_t dim = utts.front()->embedding.size();
    e.vector.assign(dim, 0.0);
    for (int i = 0; i < kEnrollmentUtterances; ++i) {
      const auto& emb = utts[order[i]]->embedding;
      for (size_t d = 0; d < dim; ++d) e.vector[d] += emb[d];
    }
    for (double& v : e.vector) v /= kEnrollmentUtterances;
    std::vector<size_t> rest(order.begin() + kEnrollmentUtterances, order.end());
    std::sort(rest.begin(), rest.end());
    for (size_t i : rest) e.trials.push_back(utts[i]);
    enrolled.emplace(speaker, std::move(e));
  }

  std::vector<double> positives, negatives;
  for (const auto& [speaker, e] : enrolled) {
    for (const auto& [other, o] : enrolled) {
      auto& scores = speaker == other ? positives : negatives;
      for (const LabeledEmbedding* t : o.trials) {
        scores.push_back(CosineSimilarity(e.vector, t->embedding));
      }
    }
  }
  EerCell cell;
  cell.representation = representation;
  cell.language = language;
  cell.eer = ComputeEer(positives, negatives);
  cell.positives = static_cast<int64_t>(positives.size());
  cell.negatives = static_cast<int64_t>(negatives.size());
  return cell;
}

EvalReport SvProtocol(const Model<float>& model,
                      const std::vector<Utterance>& test, uint64_t seed,
                      const LossWeights& weights) {
  std::vector<LabeledEmbedding> content, speaker;
  content.reserve(test.size());
  speaker.reserve(test.size());
  for (const Utterance& u : test) {
    content.push_back({u.speaker_id, u.language,
                       UtteranceEmbedding(model, u.features,
                                          Representation::kContent)});
    speaker.push_back({u.speaker_id, u.language,
                       UtteranceEmbedding(model, u.features,
                                          Representation::kSpeaker)});
  }
  EvalReport report;
  report.beta_c = weights.beta_c;
  report.beta_s = weights.beta_s;
  for (Representation r : {Representation::kContent, Representation::kSpeaker}) {
    const auto& items = r == Representation::kContent ? content : speaker;
    for (Language l : {Language::kA, Language::kB}) {
      report.cells.push_back(ScoreTrials(items, l, r, seed));
    }
  }
  return report;
}

namespace {

void CheckTrend(const SweepTable& table, Representation rep, bool along_beta_c,
                bool non_decreasing, TrendVerdict& verdict) {
  // Group by the fixed coordinate, order by the varying one.
  std::map<double, std::vector<const SweepRow*>> groups;
  for (const SweepRow& row : table.rows) {
    if (row.failed) continue;
    groups[along_beta_c ? row.beta_s : row.beta_c].push_back(&row);
  }
  for (auto& [fixed, rows] : groups) {
    std::sort(rows.begin(), rows.end(), [&](const SweepRow* a, const SweepRow* b) {
      return along_beta_c ? a->beta_c < b->beta_c : a->beta_s < b->beta_s;
    });
    for (Language lang : {Language::kA, Language::kB}) {
      for (size_t i = 1; i < rows.size(); ++i) {
        const double lo = rows[i - 1]->report.cell(rep, lang).eer;
        const double hi = rows[i]->report.cell(rep, lang).eer;
        const bool ok = non_decreasing ? hi >= lo : hi <= lo;
        if (ok) continue;
        verdict.holds = false;
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "%s/%c at %s=%g: eer %.4f at %s=%g then %.4f at %s=%g",
                      RepresentationName(rep).c_str(), LanguageLabel(lang),
                      along_beta_c ? "beta_s" : "beta_c", fixed, lo,
                      along_beta_c ? "beta_c" : "beta_s",
                      along_beta_c ? rows[i - 1]->beta_c : rows[i - 1]->beta_s,
                      hi, along_beta_c ? "beta_c" : "beta_s",
                      along_beta_c ? rows[i]->beta_c : rows[i]->beta_s);
        verdict.violations.push_back(buf);
      }
    }
  }
}

}  // namespace

SweepVerdicts ComputeVerdicts(const SweepTable& table) {
  SweepVerdicts v;
  v.content_vs_beta_c.name = "z_c EER non-decreasing in beta_c";
  v.speaker_vs_beta_s.name = "z_s EER non-decreasing in beta_s";
  v.content_vs_beta_s.name = "z_c EER non-increasing in beta_s";
  CheckTrend(table, Representation::kContent, true, true, v.content_vs_beta_c);
  CheckTrend(table, Representation::kSpeaker, false, true, v.speaker_vs_beta_s);
  CheckTrend(table, Representation::kContent, false, false, v.content_vs_beta_s);
  double best = -INFINITY;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const SweepRow& row = table.rows[i];
    if (row.failed) continue;
    double gap = 0.0;
    for (Language l : {Language::kA, Language::kB}) {
      gap += row.report.cell(Representation::kContent, l).eer -
             row.report.cell(Representation::kSpeaker, l).eer;
    }
    if (gap > best) {
      best = gap;
      v.best_row = static_cast<int>(i);
    }
  }
  return v;
}

SweepTable RunSweep(std::span<const LossWeights> cells, const CellRunner& run) {
  SweepTable table;
  for (const LossWeights& w : cells) {
    SweepRow row;
    row.beta_c = w.beta_c;
    row.beta_s = w.beta_s;
    try {
      row.report = run(w);
      row.report.beta_c = w.beta_c;
      row.report.beta_s = w.beta_s;
    } catch (const std::exception& e) {
      row.failed = true;
      row.failure = e.what();
      spdlog::error("sweep cell beta_c={} beta_s={} failed: {}", w.beta_c,
                    w.beta_s, e.what());
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

constexpr const char* kTableHeader =
    "beta_c\tbeta_s\trepresentation\tlanguage\teer\tn_pos\tn_neg";

void AppendCells(std::string& out, double beta_c, double beta_s,
                 const EvalReport& report) {
  for (const EerCell& c : report.cells) {
    out += FormatDouble(beta_c) + '\t' + FormatDouble(beta_s) + '\t' +
           RepresentationName(c.representation) + '\t' +
           LanguageLabel(c.language) + '\t' + FormatDouble(c.eer) + '\t' +
           std::to_string(c.positives) + '\t' + std::to_string(c.negatives) +
           '\n';
  }
}

nlohmann::ordered_json CellsJson(const EvalReport& report) {
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const EerCell& c : report.cells) {
    cells.push_back({{"representation", RepresentationName(c.representation)},
                     {"language", std::string(1, LanguageLabel(c.language))},
                     {"eer", c.eer},
                     {"n_pos", c.positives},
                     {"n_neg", c.negatives}});
  }
  return cells;
}

nlohmann::ordered_json VerdictJson(const TrendVerdict& v) {
  return {{"name", v.name}, {"holds", v.holds}, {"violations", v.violations}};
}

}  // namespace

std::string EvalReportTsv(const EvalReport& report) {
  std::string out = std::string(kTableHeader) + '\n';
  AppendCells(out, report.beta_c, report.beta_s, report);
  return out;
}

nlohmann::ordered_json EvalReportJson(const EvalReport& report) {
  return {{"beta_c", report.beta_c},
          {"beta_s", report.beta_s},
          {"cells", CellsJson(report)}};
}

std::string SweepTableTsv(const SweepTable& table) {
  std::string out = std::string(kTableHeader) + '\n';
  for (const SweepRow& row : table.rows) {
    if (row.failed) {
      out += FormatDouble(row.beta_c) + '\t' + FormatDouble(row.beta_s) +
             "\t-\t-\tfailed\t0\t0\n";
    } else {
      AppendCells(out, row.beta_c, row.beta_s, row.report);
    }
  }
  return out;
}

SweepTable ParseSweepTsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTableHeader) {
    throw FormatError("sweep table: missing or unexpected header line");
  }
  SweepTable table;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, '\t')) f.push_back(field);
    if (f.size() != 7) {
      throw FormatError("sweep table line " + std::to_string(line_no) +
                        ": expected 7 fields, got " + std::to_string(f.size()));
    }
    try {
      const double bc = std::stod(f[0]);
      const double bs = std::stod(f[1]);
      if (table.rows.empty() || table.rows.back().beta_c != bc ||
          table.rows.back().beta_s != bs) {
        SweepRow row;
        row.beta_c = bc;
        row.beta_s = bs;
        row.report.beta_c = bc;
        row.report.beta_s = bs;
        table.rows.push_back(std::move(row));
      }
      SweepRow& row = table.rows.back();
      if (f[4] == "failed") {
        row.failed = true;
        continue;
      }
      EerCell c;
      c.representation = ParseRepresentation(f[2]);
      c.language = ParseLanguage(f[3]);
      c.eer = std::stod(f[4]);
      c.positives = std::stoll(f[5]);
      c.negatives = std::stoll(f[6]);
      row.report.cells.push_back(c);
    } catch (const std::logic_error&) {
      throw FormatError("sweep table line " + std::to_string(line_no) +
                        ": malformed number");
    }
  }
  return table;
}

nlohmann::ordered_json SweepReportJson(const SweepTable& table,
                                       const SweepVerdicts& verdicts) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const SweepRow& row : table.rows) {
    nlohmann::ordered_json r{{"beta_c", row.beta_c}, {"beta_s", row.beta_s}};
    if (row.failed) {
      r["failed"] = true;
      r["failure"] = row.failure;
    } else {
      r["cells"] = CellsJson(row.report);
    }
    rows.push_back(std::move(r));
  }
  nlohmann::ordered_json best = nullptr;
  if (verdicts.best_row >= 0) {
    best = {{"beta_c", table.rows[verdicts.best_row].beta_c},
            {"beta_s", table.rows[verdicts.best_row].beta_s}};
  }
  return {{"rows", rows},
          {"verdicts",
           {VerdictJson(verdicts.content_vs_beta_c),
            VerdictJson(verdicts.speaker_vs_beta_s),
            VerdictJson(verdicts.content_vs_beta_s)}},
          {"best_cell", best}};
}

std::filesystem::path SweepCellDir(const std::filesystem::path& out_root,
                                   const LossWeights& weights) {
  char name[96];
  std::snprintf(name, sizeof(name), "cell-bc%g-bs%g", weights.beta_c,
                weights.beta_s);
  return out_root / name;
}

CellRunner MakeTrainEvalRunner(const ModelConfig& model_config,
                               const TrainRunConfig& base_run,
                               const SynthCorpus& corpus,
                               const std::filesystem::path& out_root,
                               uint64_t eval_seed) {
  return [=, &corpus](const LossWeights& weights) {
    TrainRunConfig run = base_run;
    run.beta_c = weights.beta_c;
    run.beta_s = weights.beta_s;
    const auto dir = SweepCellDir(out_root, weights);
    spdlog::info("sweep cell beta_c={} beta_s={} -> {}", weights.beta_c,
                 weights.beta_s, dir.string());
    Trainer trainer(model_config, run, corpus.train, &corpus.valid);
    RunTraining(trainer, model_config, dir);
    EvalReport report =
        SvProtocol(trainer.model(), corpus.test, eval_seed, weights);
    std::ofstream(dir / "eval.tsv") << EvalReportTsv(report);
    std::ofstream(dir / "eval.json") << EvalReportJson(report).dump(2) << '\n';
    return report;
  };
}

ConversionProbeResult ConversionProbe(const Model<float>& model,
                                      const SynthCorpus& corpus, Split split,
                                      int64_t pairs_per_kind, uint64_t seed) {
  const std::vector<Utterance>& utts = corpus.split(split);
  std::vector<const Utterance*> by_lang[2];
  for (const Utterance& u : utts) {
    by_lang[static_cast<int>(u.language)].push_back(&u);
  }
  if (by_lang[0].empty() || by_lang[1].empty()) {
    throw ProtocolError("conversion probe needs utterances in both languages");
  }
  const SynthMixing& mix = corpus.mixing;
  const int d = mix.feature_dim;
  const int kc = mix.content_factors;

  // Noiseless time-mean of the source content rendered with `speaker`.
  auto oracle_mean = [&](const Utterance& source, const SpeakerInfo& speaker) {
    std::vector<double> out = speaker.signature;
    const int64_t frames = source.features.frames;
    std::vector<double> c_mean(kc, 0.0);
    for (int64_t t = 0; t < frames; ++t) {
      for (int j = 0; j < kc; ++j) c_mean[j] += source.truth.content[t * kc + j];
    }
    for (int r = 0; r < d; ++r) {
      for (int j = 0; j < kc; ++j) {
        out[r] += mix.content_map[r * kc + j] * c_mean[j] /
                  static_cast<double>(frames);
      }
    }
    return out;
  };
  auto distance = [](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };

  Rng rng = MakeStream(seed, Stream::kEval, 0xC0u);
  ConversionProbeResult result;
  int64_t wins[2] = {0, 0};
  for (int kind = 0; kind < 2; ++kind) {  // 0: intra, 1: cross
    for (int64_t p = 0; p < pairs_per_kind; ++p) {
      const int src_lang = static_cast<int>(rng.UniformInt(0, 1));
      const int tgt_lang = kind == 0 ? src_lang : 1 - src_lang;
      const auto& src_pool = by_lang[src_lang];
      const auto& tgt_pool = by_lang[tgt_lang];
      const Utterance* src = src_pool[rng.UniformInt(0, src_pool.size() - 1)];
      const Utterance* tgt;
      do {
        tgt = tgt_pool[rng.UniformInt(0, tgt_pool.size() - 1)];
      } while (tgt->speaker_id == src->speaker_id);
      const TensorF converted = model.Convert(src->features.ToTensor<float>(),
                                              tgt->features.ToTensor<float>());
      const std::vector<double> mean = TimeMean(converted);
      const double d_tgt =
          distance(mean, oracle_mean(*src, corpus.speaker(tgt->speaker_id)));
      const double d_src =
          distance(mean, oracle_mean(*src, corpus.speaker(src->speaker_id)));
      if (d_tgt < d_src) ++wins[kind];
    }
  }
  result.intra_pairs = pairs_per_kind;
  result.cross_pairs = pairs_per_kind;
  if (pairs_per_kind > 0) {
    result.intra_score = static_cast<double>(wins[0]) / pairs_per_kind;
    result.cross_score = static_cast<double>(wins[1]) / pairs_per_kind;
  }
  result.near_chance = std::abs(result.intra_score - 0.5) < 0.1 ||
                       std::abs(result.cross_score - 0.5) < 0.1;
  return result;
}

}  // namespace svae
