// SPDX-License-Identifier: Apache-2.0
#include "chatqe/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include "chatqe/error.hpp"
#include "chatqe/percent.hpp"

namespace chatqe {

void ConfusionMatrix::add(Verdict predicted, Verdict truth) {
  const bool pos = predicted == Verdict::erroneous;
  const bool actual = truth == Verdict::erroneous;
  if (pos && actual) ++tp;
  else if (pos) ++fp;
  else if (actual) ++fn;
  else ++tn;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionMatrix confusion(const std::vector<Prediction>& predictions, const std::vector<Verdict>& labels) {
  if (predictions.size() != labels.size())
    throw ValidationError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(predictions[i].label, labels[i]);
  return cm;
}

PrecisionRecallF prf(const ConfusionMatrix& cm) {
  return {percent(cm.tp, cm.tp + cm.fp), percent(cm.tp, cm.tp + cm.fn), percent(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn)};
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ValidationError("accuracy of an empty confusion matrix");
  return percent(cm.tp + cm.tn, cm.total());
}

namespace {
BaselineAccuracies baselines_from_counts(long long erroneous, long long correct) {
  const long long n = erroneous + correct;
  if (n == 0) throw ValidationError("baseline accuracies need at least one label");
  const long long majority = percent_hundredths(std::max(erroneous, correct), n);
  return {static_cast<double>(majority) / 100.0, static_cast<double>(10000 - majority) / 100.0};
}
}  // namespace

BaselineAccuracies baseline_accuracies(const std::vector<Verdict>& labels) {
  long long erroneous = 0;
  for (auto v : labels)
    if (v == Verdict::erroneous) ++erroneous;
  return baselines_from_counts(erroneous, static_cast<long long>(labels.size()) - erroneous);
}

BaselineAccuracies baseline_accuracies(const ConfusionMatrix& cm) {
  return baselines_from_counts(cm.tp + cm.fn, cm.fp + cm.tn);
}

MetricsReport make_report(Direction direction, const std::map<Origin, ConfusionMatrix>& per_origin) {
  MetricsReport r;
  r.direction = direction;
  r.per_origin = per_origin;
  for (const auto& [origin, cm] : per_origin) r.overall += cm;
  const auto scores = prf(r.overall);
  r.precision = scores.precision;
  r.recall = scores.recall;
  r.f1 = scores.f1;
  r.accuracy = accuracy(r.overall);
  r.baselines = baseline_accuracies(r.overall);
  return r;
}

std::map<Direction, MetricsReport> evaluate(const std::vector<LabeledExample>& examples,
                                            const std::vector<PredictionRecord>& predictions) {
  std::map<CandidateKey, const PredictionRecord*> by_key;
  for (const auto& p : predictions)
    if (!by_key.emplace(p.key(), &p).second) throw ValidationError("duplicate prediction for " + to_string(p.key()));
  std::map<Direction, std::map<Origin, ConfusionMatrix>> matrices;
  for (const auto& e : examples) {
    const CandidateKey key{e.quad.chat_id, e.quad.index, e.quad.origin};
    auto it = by_key.find(key);
    if (it == by_key.end()) throw ValidationError("no prediction for example " + to_string(key));
    if (it->second->direction != e.quad.direction)
      throw ValidationError("prediction for " + to_string(key) + " has direction " +
                            std::string(to_string(it->second->direction)));
    matrices[e.quad.direction][e.quad.origin].add(it->second->prediction.label, e.label);
  }
  std::map<Direction, MetricsReport> out;
  for (const auto& [dir, per_origin] : matrices) out.emplace(dir, make_report(dir, per_origin));
  return out;
}

namespace {
json cm_json(const ConfusionMatrix& cm) { return {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}}; }

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}
}  // namespace

json to_json(const MetricsReport& r) {
  json origins = json::object();
  for (const auto& [origin, cm] : r.per_origin) origins[std::string(to_string(origin))] = cm_json(cm);
  return {{"direction", to_string(r.direction)},
          {"examples", r.overall.total()},
          {"accuracy", r.accuracy},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"majority_accuracy", r.baselines.majority},
          {"minority_accuracy", r.baselines.minority},
          {"confusion", cm_json(r.overall)},
          {"per_origin", std::move(origins)}};
}

json to_json(const std::map<Direction, MetricsReport>& reports) {
  json dirs = json::object();
  for (const auto& [dir, r] : reports) dirs[std::string(to_string(dir))] = to_json(r);
  return {{"directions", std::move(dirs)}};
}

std::string format_report(const std::map<Direction, MetricsReport>& reports) {
  std::ostringstream out;
  char line[200];
  out << "Accuracy (%)\n";
  std::snprintf(line, sizeof line, "%-16s", "");
  out << line;
  for (const auto& [dir, r] : reports) {
    std::snprintf(line, sizeof line, "%10s", std::string(to_string(dir)).c_str());
    out << line;
  }
  out << '\n';
  auto row = [&](const char* name, auto getter) {
    std::snprintf(line, sizeof line, "%-16s", name);
    out << line;
    for (const auto& [dir, r] : reports) {
      std::snprintf(line, sizeof line, "%10s", fmt2(getter(r)).c_str());
      out << line;
    }
    out << '\n';
  };
  row("Majority class", [](const MetricsReport& r) { return r.baselines.majority; });
  row("Minority class", [](const MetricsReport& r) { return r.baselines.minority; });
  row("Error detector", [](const MetricsReport& r) { return r.accuracy; });

  out << "\nF-score (precision, recall), erroneous = positive\n";
  for (const auto& [dir, r] : reports) {
    std::snprintf(line, sizeof line, "%-8s F %6s  (P %6s  R %6s)\n", std::string(to_string(dir)).c_str(),
                  fmt2(r.f1).c_str(), fmt2(r.precision).c_str(), fmt2(r.recall).c_str());
    out << line;
  }

  out << "\nConfusion matrices (rows: annotation, columns: prediction)\n";
  for (const auto& [dir, r] : reports) {
    out << to_string(dir) << '\n';
    for (const auto& [origin, cm] : r.per_origin) {
      std::snprintf(line, sizeof line, "  %-8s %-10s %9s %9s\n", std::string(to_string(origin)).c_str(), "", "correct",
                    "erroneous");
      out << line;
      std::snprintf(line, sizeof line, "  %-8s %-10s %9lld %9lld\n", "", "correct", cm.tn, cm.fp);
      out << line;
      std::snprintf(line, sizeof line, "  %-8s %-10s %9lld %9lld\n", "", "erroneous", cm.fn, cm.tp);
      out << line;
    }
  }
  return out.str();
}

BleuLabelReport bleu_vs_label_report(const std::vector<LabeledExample>& examples,
                                     const std::vector<PredictionRecord>& predictions,
                                     const std::map<UtteranceKey, std::string>& references, double threshold,
                                     const BleuConfig& cfg) {
  std::map<CandidateKey, Prediction> preds;
  for (const auto& p : predictions) preds[p.key()] = p.prediction;
  BleuLabelReport report;
  report.config = cfg;
  report.threshold = threshold;
  for (const auto& e : examples) {
    const auto& q = e.quad;
    if (q.origin == Origin::human) continue;
    auto ref = references.find({q.chat_id, q.index});
    if (ref == references.end()) continue;
    std::optional<Prediction> pred;
    if (auto it = preds.find({q.chat_id, q.index, q.origin}); it != preds.end()) pred = it->second;
    const bool flagged = e.label == Verdict::erroneous || (pred && pred->label == Verdict::erroneous);
    if (!flagged) continue;
    const double score = sentence_bleu(q.resp_tgt, ref->second, cfg);
    if (score < threshold) continue;
    report.items.push_back({{q.chat_id, q.index, q.origin}, q.direction, q.resp_src, q.ctx_src, q.resp_tgt, ref->second,
                            score, e.label, pred});
  }
  return report;
}

json to_json(const BleuLabelReport& report) {
  json items = json::array();
  for (const auto& it : report.items) {
    json j{{"chat_id", it.key.chat_id},
           {"index", it.key.index},
           {"origin", to_string(it.key.origin)},
           {"direction", to_string(it.direction)},
           {"context", it.context},
           {"source", it.source},
           {"translation", it.translation},
           {"reference", it.reference},
           {"sentence_bleu", it.bleu},
           {"label", to_string(it.label)}};
    if (it.prediction) {
      j["predicted_label"] = to_string(it.prediction->label);
      j["prob_erroneous"] = it.prediction->prob_erroneous;
    }
    items.push_back(std::move(j));
  }
  return {{"bleu_config", to_json(report.config)}, {"threshold", report.threshold}, {"count", report.items.size()},
          {"items", std::move(items)}};
}

std::string format_report(const BleuLabelReport& report) {
  std::ostringstream out;
  out << "High sentence-BLEU translations labeled or predicted erroneous (BLEU >= " << fmt2(report.threshold)
      << ", config " << to_json(report.config).dump() << ")\n";
  for (const auto& it : report.items) {
    out << "\n" << to_string(it.key) << " " << to_string(it.direction) << '\n';
    out << "  context     : " << it.context << '\n';
    out << "  source      : " << it.source << '\n';
    out << "  translation : " << it.translation << '\n';
    out << "  reference   : " << it.reference << '\n';
    out << "  sentence-BLEU " << fmt2(it.bleu) << ", label " << to_string(it.label);
    if (it.prediction) out << ", prediction " << to_string(it.prediction->label);
    out << '\n';
  }
  out << "\n" << report.items.size() << " item(s)\n";
  return out.str();
}

}  // namespace chatqe
