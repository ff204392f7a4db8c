// SPDX-License-Identifier: Apache-2.0
#include "chatqe/labeling.hpp"

#include <array>
#include <set>
#include <sstream>
#include <tuple>
#include <utility>

#include "chatqe/error.hpp"
#include "chatqe/percent.hpp"

namespace chatqe {

namespace {

constexpr std::array<std::pair<BadReason, std::string_view>, 6> kBadReasons{{
    {BadReason::incorrect, "incorrect"},
    {BadReason::content_lost, "content_lost"},
    {BadReason::grammar_spelling, "grammar_spelling"},
    {BadReason::style_shift, "style_shift"},
    {BadReason::incomprehensible, "incomprehensible"},
    {BadReason::generally_terrible, "generally_terrible"},
}};

constexpr std::array<std::pair<AggregationRule, std::string_view>, 3> kRules{{
    {AggregationRule::majority, "majority"},
    {AggregationRule::any_bad, "any-bad"},
    {AggregationRule::unanimous_bad, "unanimous-bad"},
}};

}  // namespace

std::string_view to_string(RatingVerdict v) { return v == RatingVerdict::good ? "good" : "bad"; }

RatingVerdict parse_rating_verdict(std::string_view s) {
  if (s == "good") return RatingVerdict::good;
  if (s == "bad") return RatingVerdict::bad;
  throw Error("unknown rating verdict '" + std::string(s) + "'");
}

std::string_view to_string(BadReason r) {
  for (const auto& [v, name] : kBadReasons)
    if (v == r) return name;
  return "?";
}

BadReason parse_bad_reason(std::string_view s) {
  for (const auto& [v, name] : kBadReasons)
    if (name == s) return v;
  throw Error("unknown translation-rating reason '" + std::string(s) + "'");
}

std::string_view to_string(AggregationRule r) {
  for (const auto& [v, name] : kRules)
    if (v == r) return name;
  return "?";
}

AggregationRule parse_aggregation_rule(std::string_view s) {
  for (const auto& [v, name] : kRules)
    if (name == s) return v;
  throw Error("unknown aggregation rule '" + std::string(s) + "'");
}

json to_json(const TranslationRating& r) {
  json j{{"chat_id", r.chat_id},     {"index", r.index},
         {"origin", to_string(r.origin)}, {"worker_id", r.worker_id},
         {"verdict", to_string(r.verdict)}};
  if (!r.reasons.empty()) {
    json reasons = json::array();
    for (auto reason : r.reasons) reasons.push_back(to_string(reason));
    j["reasons"] = std::move(reasons);
  }
  return j;
}

TranslationRating translation_rating_from_json(const json& record) {
  TranslationRating r;
  r.chat_id = require_string(record, "chat_id");
  r.index = static_cast<int>(require_integer(record, "index"));
  if (r.index < 0) throw Error("field 'index' must be non-negative");
  r.origin = parse_origin(require_string(record, "origin"));
  r.worker_id = require_string(record, "worker_id");
  r.verdict = parse_rating_verdict(require_string(record, "verdict"));
  if (auto it = record.find("reasons"); it != record.end() && !it->is_null()) {
    if (!it->is_array()) throw Error("field 'reasons' must be an array");
    for (const auto& reason : *it) {
      if (!reason.is_string()) throw Error("reasons must be strings");
      r.reasons.push_back(parse_bad_reason(reason.get<std::string>()));
    }
  }
  if (r.verdict == RatingVerdict::good && !r.reasons.empty()) throw Error("reasons given for a good verdict");
  return r;
}

std::vector<TranslationRating> read_translation_ratings(const std::filesystem::path& path) {
  std::vector<TranslationRating> out;
  read_jsonl(path, [&](const json& r, std::size_t) { out.push_back(translation_rating_from_json(r)); });
  return out;
}

void write_translation_ratings(const std::vector<TranslationRating>& ratings, const std::filesystem::path& path) {
  AtomicFileWriter w(path);
  for (const auto& r : ratings) w.write_line(to_json(r));
  w.commit();
}

VerdictMap aggregate_verdicts(const std::vector<TranslationRating>& ratings, AggregationRule rule) {
  struct Tally {
    int good = 0;
    int bad = 0;
  };
  std::set<std::tuple<std::string_view, int, Origin, std::string_view>> seen;
  std::map<CandidateKey, Tally> tallies;
  for (const auto& r : ratings) {
    if (!seen.emplace(r.chat_id, r.index, r.origin, r.worker_id).second)
      throw ValidationError("duplicate rating of " + to_string(r.key()) + " by worker " + r.worker_id);
    auto& t = tallies[r.key()];
    (r.verdict == RatingVerdict::bad ? t.bad : t.good)++;
  }
  VerdictMap out;
  for (const auto& [key, t] : tallies) {
    bool erroneous = false;
    switch (rule) {
      case AggregationRule::majority: erroneous = t.bad >= t.good; break;
      case AggregationRule::any_bad: erroneous = t.bad > 0; break;
      case AggregationRule::unanimous_bad: erroneous = t.good == 0; break;
    }
    out.emplace(key, erroneous ? Verdict::erroneous : Verdict::correct);
  }
  return out;
}

std::vector<TranslationCandidate> apply_verdicts(const std::vector<TranslationCandidate>& candidates,
                                                 const VerdictMap& verdicts) {
  std::vector<TranslationCandidate> out;
  out.reserve(candidates.size());
  std::size_t used = 0;
  for (const auto& c : candidates) {
    auto it = verdicts.find(c.key());
    if (it == verdicts.end()) throw PipelineError("no ratings for candidate " + to_string(c.key()));
    auto labeled = c;
    labeled.verdict = it->second;
    out.push_back(std::move(labeled));
    ++used;
  }
  if (used != verdicts.size()) {
    std::set<CandidateKey> keys;
    for (const auto& c : candidates) keys.insert(c.key());
    for (const auto& [key, v] : verdicts)
      if (!keys.contains(key)) throw PipelineError("ratings for unknown candidate " + to_string(key));
  }
  return out;
}

namespace {
std::map<UtteranceKey, std::vector<const TranslationCandidate*>> group_by_utterance(
    const std::vector<TranslationCandidate>& candidates) {
  std::map<UtteranceKey, std::vector<const TranslationCandidate*>> groups;
  for (const auto& c : candidates) {
    if (!c.verdict) throw PipelineError("candidate " + to_string(c.key()) + " has no verdict");
    groups[{c.chat_id, c.index}].push_back(&c);
  }
  return groups;
}
}  // namespace

DeletionResult apply_deletion_rule(const std::vector<TranslationCandidate>& candidates) {
  std::set<UtteranceKey> deleted;
  for (const auto& [key, group] : group_by_utterance(candidates))
    if (all_erroneous(group)) deleted.insert(key);
  DeletionResult result;
  for (const auto& c : candidates)
    if (!deleted.contains({c.chat_id, c.index})) result.retained.push_back(c);
  result.deleted.assign(deleted.begin(), deleted.end());
  return result;
}

double DatasetStats::bad_rate(Origin o) const {
  auto it = origins.find(o);
  if (it == origins.end() || it->second.total == 0) return 0.0;
  return static_cast<double>(it->second.bad) / static_cast<double>(it->second.total);
}

DatasetStats compute_stats(const std::vector<TranslationCandidate>& labeled, const std::vector<Chat>& chats) {
  DatasetStats stats;
  const auto groups = group_by_utterance(labeled);
  for (const auto& c : labeled) {
    auto& o = stats.origins[c.origin];
    ++o.total;
    if (c.verdict == Verdict::erroneous) ++o.bad;
  }
  for (const auto& chat : chats) {
    auto& d = stats.directions[chat.direction()];
    for (const auto& u : chat.utterances) {
      auto it = groups.find({chat.chat_id, u.index});
      if (it == groups.end()) continue;
      const auto& group = it->second;
      if (all_erroneous(group)) {
        ++d.deleted_count;
        ++stats.deleted_total;
        continue;
      }
      if (u.index == 0) continue;
      ++d.utterance_count;
      for (const auto* c : group) {
        ++d.example_count;
        (c->verdict == Verdict::erroneous ? d.erroneous_count : d.correct_count)++;
      }
    }
  }
  return stats;
}

json to_json(const DatasetStats& stats) {
  json dirs = json::object();
  for (const auto& [dir, d] : stats.directions) {
    dirs[std::string(to_string(dir))] = {{"utterance_count", d.utterance_count},
                                         {"example_count", d.example_count},
                                         {"erroneous_count", d.erroneous_count},
                                         {"correct_count", d.correct_count},
                                         {"deleted_count", d.deleted_count}};
  }
  json origins = json::object();
  for (const auto& [origin, o] : stats.origins) {
    origins[std::string(to_string(origin))] = {
        {"total", o.total}, {"bad", o.bad}, {"bad_rate", percent(o.bad, o.total)}};
  }
  return {{"directions", std::move(dirs)}, {"origins", std::move(origins)}, {"deleted_total", stats.deleted_total}};
}

std::string format_stats_table(const DatasetStats& stats) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-9s %10s %10s %10s %10s %10s\n", "direction", "utterances", "examples",
                "erroneous", "correct", "deleted");
  out << line;
  for (const auto& [dir, d] : stats.directions) {
    std::snprintf(line, sizeof line, "%-9s %10lld %10lld %10lld %10lld %10lld\n", std::string(to_string(dir)).c_str(),
                  d.utterance_count, d.example_count, d.erroneous_count, d.correct_count, d.deleted_count);
    out << line;
  }
  out << "deleted utterances in total: " << stats.deleted_total << "\n\n";
  std::snprintf(line, sizeof line, "%-9s %10s %10s %10s\n", "origin", "total", "bad", "bad rate");
  out << line;
  for (const auto& [origin, o] : stats.origins) {
    std::snprintf(line, sizeof line, "%-9s %10lld %10lld %9s%%\n", std::string(to_string(origin)).c_str(), o.total,
                  o.bad, format_percent(o.bad, o.total).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace chatqe
