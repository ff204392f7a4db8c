// SPDX-License-Identifier: Apache-2.0
#include "chatqe/coherence.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <utility>

#include "chatqe/error.hpp"

namespace chatqe {

namespace {
constexpr std::array<std::pair<IncoherenceReason, std::string_view>, 5> kReasons{{
    {IncoherenceReason::question_ignored, "question_ignored"},
    {IncoherenceReason::unnatural_topic_change, "unnatural_topic_change"},
    {IncoherenceReason::not_addressing, "not_addressing"},
    {IncoherenceReason::out_of_order, "out_of_order"},
    {IncoherenceReason::hard_to_follow, "hard_to_follow"},
}};
}  // namespace

std::string_view to_string(IncoherenceReason r) {
  for (const auto& [v, name] : kReasons)
    if (v == r) return name;
  return "?";
}

IncoherenceReason parse_incoherence_reason(std::string_view s) {
  for (const auto& [v, name] : kReasons)
    if (name == s) return v;
  throw Error("unknown incoherence reason '" + std::string(s) + "'");
}

json to_json(const CoherenceRating& r) {
  json j{{"chat_id", r.chat_id}, {"worker_id", r.worker_id}, {"coherent", r.coherent}};
  if (!r.reasons.empty()) {
    json reasons = json::array();
    for (auto reason : r.reasons) reasons.push_back(to_string(reason));
    j["reasons"] = std::move(reasons);
  }
  return j;
}

CoherenceRating coherence_rating_from_json(const json& record) {
  CoherenceRating r;
  r.chat_id = require_string(record, "chat_id");
  r.worker_id = require_string(record, "worker_id");
  r.coherent = require_bool(record, "coherent");
  if (auto it = record.find("reasons"); it != record.end() && !it->is_null()) {
    if (!it->is_array()) throw Error("field 'reasons' must be an array");
    for (const auto& reason : *it) {
      if (!reason.is_string()) throw Error("reasons must be strings");
      r.reasons.push_back(parse_incoherence_reason(reason.get<std::string>()));
    }
  }
  if (r.coherent && !r.reasons.empty()) throw Error("reasons given for a coherent verdict");
  if (!r.coherent && r.reasons.empty()) throw Error("incoherent verdict without reasons");
  return r;
}

std::vector<CoherenceRating> read_coherence_ratings(const std::filesystem::path& path) {
  std::vector<CoherenceRating> out;
  read_jsonl(path, [&](const json& r, std::size_t) { out.push_back(coherence_rating_from_json(r)); });
  return out;
}

void write_coherence_ratings(const std::vector<CoherenceRating>& ratings, const std::filesystem::path& path) {
  AtomicFileWriter w(path);
  for (const auto& r : ratings) w.write_line(to_json(r));
  w.commit();
}

std::vector<ChatScore> score_chats(const std::vector<CoherenceRating>& ratings) {
  std::set<std::pair<std::string_view, std::string_view>> seen;
  std::map<std::string, ChatScore> by_chat;
  for (const auto& r : ratings) {
    if (!seen.emplace(r.chat_id, r.worker_id).second)
      throw ValidationError("duplicate coherence rating for chat " + r.chat_id + " by worker " + r.worker_id);
    auto& score = by_chat[r.chat_id];
    score.chat_id = r.chat_id;
    ++score.total_votes;
    if (r.coherent) ++score.coherent_votes;
  }
  std::vector<ChatScore> out;
  out.reserve(by_chat.size());
  for (auto& [id, score] : by_chat) out.push_back(std::move(score));
  return out;
}

Selection select_top(const std::vector<ChatScore>& scores, std::size_t k, int min_votes) {
  std::vector<const ChatScore*> eligible;
  for (const auto& s : scores)
    if (s.coherent_votes >= min_votes) eligible.push_back(&s);
  std::sort(eligible.begin(), eligible.end(), [](const ChatScore* a, const ChatScore* b) {
    if (a->coherent_votes != b->coherent_votes) return a->coherent_votes > b->coherent_votes;
    return a->chat_id < b->chat_id;
  });
  Selection sel;
  const std::size_t n = std::min(k, eligible.size());
  sel.chat_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) sel.chat_ids.push_back(eligible[i]->chat_id);
  sel.shortfall = k - n;
  return sel;
}

}  // namespace chatqe
