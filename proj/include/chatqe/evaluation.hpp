// SPDX-License-Identifier: Apache-2.0
//
// Error-detector evaluation. Positive = predicted erroneous, truth =
// labeled erroneous. All percentages are rounded half-up to two decimals.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "chatqe/bleu.hpp"
#include "chatqe/corpus.hpp"
#include "chatqe/prediction.hpp"

namespace chatqe {

struct ConfusionMatrix {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  long long tn = 0;

  long long total() const { return tp + fp + fn + tn; }
  void add(Verdict predicted, Verdict truth);
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws ValidationError when the lists differ in length.
ConfusionMatrix confusion(const std::vector<Prediction>& predictions, const std::vector<Verdict>& labels);

struct PrecisionRecallF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Zero denominators give 0. F is the exact harmonic mean 2tp/(2tp+fp+fn)
/// rounded once, not recomputed from rounded P and R.
PrecisionRecallF prf(const ConfusionMatrix& cm);

/// (tp+tn)/total as a percentage; throws ValidationError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

struct BaselineAccuracies {
  double majority = 0;
  double minority = 0;  // exactly 100 - majority
};

/// Accuracy of the constant majority-label and minority-label classifiers.
/// Throws ValidationError on an empty label list.
BaselineAccuracies baseline_accuracies(const std::vector<Verdict>& labels);
BaselineAccuracies baseline_accuracies(const ConfusionMatrix& cm);

struct MetricsReport {
  Direction direction = Direction::en_ja;
  ConfusionMatrix overall;
  std::map<Origin, ConfusionMatrix> per_origin;
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  BaselineAccuracies baselines;
};

/// Builds the report from per-origin matrices; `overall` is their sum.
MetricsReport make_report(Direction direction, const std::map<Origin, ConfusionMatrix>& per_origin);

/// Joins labeled examples with predictions by (chat_id, index, origin) and
/// reports per direction. Throws ValidationError when an example has no
/// prediction or a prediction disagrees on direction.
std::map<Direction, MetricsReport> evaluate(const std::vector<LabeledExample>& examples,
                                            const std::vector<PredictionRecord>& predictions);

json to_json(const MetricsReport& report);
json to_json(const std::map<Direction, MetricsReport>& reports);
/// Aligned-text rendering in the layout of the accuracy, P/R/F and
/// per-origin confusion tables.
std::string format_report(const std::map<Direction, MetricsReport>& reports);

struct HighBleuItem {
  CandidateKey key;
  Direction direction = Direction::en_ja;
  std::string source;
  std::string context;
  std::string translation;
  std::string reference;
  double bleu = 0;
  Verdict label = Verdict::correct;
  std::optional<Prediction> prediction;
};

struct BleuLabelReport {
  BleuConfig config;
  double threshold = 0;
  std::vector<HighBleuItem> items;
};

/// Lists machine translations whose sentence-BLEU against the reference is
/// at least `threshold` although they are labeled or predicted erroneous.
/// References are the human-origin texts in `references`, keyed by
/// (chat_id, index); human-origin examples are not scored against
/// themselves.
BleuLabelReport bleu_vs_label_report(const std::vector<LabeledExample>& examples,
                                     const std::vector<PredictionRecord>& predictions,
                                     const std::map<UtteranceKey, std::string>& references, double threshold,
                                     const BleuConfig& cfg = {});

json to_json(const BleuLabelReport& report);
std::string format_report(const BleuLabelReport& report);

}  // namespace chatqe
