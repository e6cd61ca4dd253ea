#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "grhd/dataset/attribute_groups.hpp"
#include "grhd/dataset/metadata.hpp"

namespace grhd::metrics {

// Higher score = more anomalous.
struct ScoredClip {
  std::string clip_id;
  dataset::ClipMetadata metadata;
  double score = 0.0;
};

// Mann-Whitney statistic with ties counted 1/2. Throws DegenerateLabels when
// either side is empty.
double auc(std::span<const double> normal, std::span<const double> anomaly);

// Area under the ROC curve for FPR in [0, p], divided by p. The ROC is the
// exact step curve with tied scores joined by straight segments; with p = 1
// the result is bit-identical to auc(). Throws DegenerateLabels, InvalidP.
double pauc(std::span<const double> normal, std::span<const double> anomaly, double p = 0.1);

// n / sum(1 / v). Throws NonpositiveValue (also for an empty list).
double harmonic_mean(std::span<const double> values);

// -log softmax(logits)[section_class].
double nls_score(std::span<const double> logits_sec, std::size_t section_class);

// Per clip: nls_score of its own section. Throws UnknownSection for a section
// id the model was not trained on.
std::vector<double> score_nls(const std::vector<std::vector<double>>& logits_sec,
                              std::span<const dataset::ClipMetadata> clips, const dataset::AttributeGroupTable& table);

// Mean cosine distance (1 - cos) to the k nearest bank rows; k is capped at
// the bank size. A zero vector has cosine 0 to everything. Throws EmptyBank,
// InvalidConfig for k = 0, ShapeMismatch on ragged rows.
double score_knn(std::span<const double> embedding, const std::vector<std::vector<double>>& bank, std::size_t k = 1);

// One metric cell; value is NaN when the cell is degenerate (no normal or no
// anomalous clip), with the reason in note.
struct Cell {
  std::string machine;
  std::string section;  // section id, or "ALL" for aggregates
  std::string domain;   // source | target | all
  std::string metric;   // AUC | pAUC | AUC-s | AUC-t | HAUC
  double value = 0.0;
  std::string note;
};

struct EvalReport {
  double p = 0.1;
  std::vector<Cell> cells;  // per-section cells, machine aggregates, then totals
  double auc_source = 0.0;
  double auc_target = 0.0;
  double pauc = 0.0;
  double hauc = 0.0;
  std::size_t skipped_unlabeled = 0;

  // Rows machine,section,domain,metric,value with values x100, 2 decimals.
  std::string to_csv() const;
};

// AUC per (machine, section, domain); pAUC per (machine, section) over both
// domains pooled. Machine aggregates and totals are harmonic means over the
// non-degenerate section cells (0 if any of them is 0); HAUC is the harmonic
// mean of the AUC-s, AUC-t and pAUC totals. Clips with condition Unknown are
// skipped and counted.
EvalReport evaluate(std::span<const ScoredClip> clips, double p = 0.1);

}  // namespace grhd::metrics
