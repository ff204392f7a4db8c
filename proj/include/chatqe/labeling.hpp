// SPDX-License-Identifier: Apache-2.0
//
// Crowd quality labels for translation candidates: verdict aggregation, the
// deletion rule for untranslatable utterances, and dataset statistics.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "chatqe/corpus.hpp"

namespace chatqe {

enum class RatingVerdict { good, bad };

enum class BadReason {
  incorrect,
  content_lost,
  grammar_spelling,
  style_shift,
  incomprehensible,
  generally_terrible,
};

std::string_view to_string(RatingVerdict v);
std::string_view to_string(BadReason r);
RatingVerdict parse_rating_verdict(std::string_view s);
BadReason parse_bad_reason(std::string_view s);

struct TranslationRating {
  std::string chat_id;
  int index = 0;
  Origin origin = Origin::human;
  std::string worker_id;
  RatingVerdict verdict = RatingVerdict::good;
  std::vector<BadReason> reasons;  // only for bad
  CandidateKey key() const { return {chat_id, index, origin}; }
  bool operator==(const TranslationRating&) const = default;
};

json to_json(const TranslationRating& r);
TranslationRating translation_rating_from_json(const json& record);
std::vector<TranslationRating> read_translation_ratings(const std::filesystem::path& path);
void write_translation_ratings(const std::vector<TranslationRating>& ratings, const std::filesystem::path& path);

enum class AggregationRule {
  /// erroneous when bad votes >= good votes (ties go to erroneous).
  majority,
  /// erroneous when any rater said bad.
  any_bad,
  /// erroneous only when every rater said bad.
  unanimous_bad,
};
std::string_view to_string(AggregationRule r);
AggregationRule parse_aggregation_rule(std::string_view s);

using VerdictMap = std::map<CandidateKey, Verdict>;

/// Throws ValidationError on a duplicate (chat_id, index, origin, worker_id).
VerdictMap aggregate_verdicts(const std::vector<TranslationRating>& ratings,
                              AggregationRule rule = AggregationRule::majority);

/// Copies `candidates` with verdicts filled in. Every candidate must have a
/// verdict and every verdict must name a candidate (PipelineError otherwise).
std::vector<TranslationCandidate> apply_verdicts(const std::vector<TranslationCandidate>& candidates,
                                                 const VerdictMap& verdicts);

struct DeletionResult {
  std::vector<TranslationCandidate> retained;
  std::vector<UtteranceKey> deleted;  // sorted
};

/// Removes every utterance whose candidates are all erroneous.
DeletionResult apply_deletion_rule(const std::vector<TranslationCandidate>& candidates);

struct DirectionStats {
  long long utterance_count = 0;  // retained response utterances (index >= 1)
  long long example_count = 0;
  long long erroneous_count = 0;
  long long correct_count = 0;
  long long deleted_count = 0;
  bool operator==(const DirectionStats&) const = default;
};

struct OriginStats {
  long long total = 0;
  long long bad = 0;
  bool operator==(const OriginStats&) const = default;
};

struct DatasetStats {
  std::map<Direction, DirectionStats> directions;
  std::map<Origin, OriginStats> origins;
  long long deleted_total = 0;

  /// bad / total for an origin, 0 when the origin has no candidates.
  double bad_rate(Origin o) const;
  bool operator==(const DatasetStats&) const = default;
};

/// Statistics over fully labeled candidates (before deletion). Per-origin
/// bad rates cover every candidate; per-direction counts describe the
/// example set that build_quads produces.
DatasetStats compute_stats(const std::vector<TranslationCandidate>& labeled, const std::vector<Chat>& chats);

json to_json(const DatasetStats& stats);
std::string format_stats_table(const DatasetStats& stats);

}  // namespace chatqe
