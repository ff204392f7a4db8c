// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "chatqe/corpus.hpp"

namespace chatqe {

inline constexpr double kDefaultThreshold = 0.5;

struct Prediction {
  Verdict label = Verdict::correct;
  double prob_erroneous = 0.0;

  /// label = erroneous iff prob_erroneous >= threshold.
  static Prediction from_probability(double prob_erroneous, double threshold = kDefaultThreshold) {
    return {prob_erroneous >= threshold ? Verdict::erroneous : Verdict::correct, prob_erroneous};
  }
  bool operator==(const Prediction&) const = default;
};

/// One line of predictions.jsonl.
struct PredictionRecord {
  std::string chat_id;
  int index = 0;
  Origin origin = Origin::human;
  Direction direction = Direction::en_ja;
  Prediction prediction;

  CandidateKey key() const { return {chat_id, index, origin}; }
  bool operator==(const PredictionRecord&) const = default;
};

json to_json(const PredictionRecord& p);
PredictionRecord prediction_from_json(const json& record);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::vector<PredictionRecord>& predictions, const std::filesystem::path& path);

}  // namespace chatqe
