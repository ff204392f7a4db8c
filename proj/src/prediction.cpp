// SPDX-License-Identifier: Apache-2.0
#include "chatqe/prediction.hpp"

#include "chatqe/error.hpp"

namespace chatqe {

json to_json(const PredictionRecord& p) {
  return {{"chat_id", p.chat_id},
          {"index", p.index},
          {"origin", to_string(p.origin)},
          {"direction", to_string(p.direction)},
          {"prob_erroneous", p.prediction.prob_erroneous},
          {"predicted_label", to_string(p.prediction.label)}};
}

PredictionRecord prediction_from_json(const json& r) {
  PredictionRecord p;
  p.chat_id = require_string(r, "chat_id");
  p.index = static_cast<int>(require_integer(r, "index"));
  p.origin = parse_origin(require_string(r, "origin"));
  p.direction = parse_direction(require_string(r, "direction"));
  p.prediction.prob_erroneous = require_number(r, "prob_erroneous");
  p.prediction.label = parse_verdict(require_string(r, "predicted_label"));
  if (!(p.prediction.prob_erroneous >= 0.0 && p.prediction.prob_erroneous <= 1.0))
    throw Error("prob_erroneous must be in [0,1]");
  return p;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  read_jsonl(path, [&](const json& r, std::size_t) { out.push_back(prediction_from_json(r)); });
  return out;
}

void write_predictions(const std::vector<PredictionRecord>& predictions, const std::filesystem::path& path) {
  AtomicFileWriter w(path);
  for (const auto& p : predictions) w.write_line(to_json(p));
  w.commit();
}

}  // namespace chatqe
