// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "chatqe/jsonl.hpp"

namespace chatqe {

/// Why a crowd worker judged a chat incoherent.
enum class IncoherenceReason {
  question_ignored,
  unnatural_topic_change,
  not_addressing,
  out_of_order,
  hard_to_follow,
};
std::string_view to_string(IncoherenceReason r);
IncoherenceReason parse_incoherence_reason(std::string_view s);

struct CoherenceRating {
  std::string chat_id;
  std::string worker_id;
  bool coherent = true;
  std::vector<IncoherenceReason> reasons;  // non-empty iff !coherent
  bool operator==(const CoherenceRating&) const = default;
};

struct ChatScore {
  std::string chat_id;
  int coherent_votes = 0;
  int total_votes = 0;
  bool operator==(const ChatScore&) const = default;
};

json to_json(const CoherenceRating& r);
/// Rejects reasons outside the taxonomy and reason lists inconsistent with
/// the coherent flag.
CoherenceRating coherence_rating_from_json(const json& record);
std::vector<CoherenceRating> read_coherence_ratings(const std::filesystem::path& path);
void write_coherence_ratings(const std::vector<CoherenceRating>& ratings, const std::filesystem::path& path);

/// One score per distinct chat, ordered by chat_id. Throws ValidationError
/// on a duplicate (chat_id, worker_id).
std::vector<ChatScore> score_chats(const std::vector<CoherenceRating>& ratings);

struct Selection {
  std::vector<std::string> chat_ids;
  /// k minus the number selected; non-zero when too few chats reach
  /// min_votes.
  std::size_t shortfall = 0;
};

inline constexpr int kDefaultMinCoherentVotes = 7;
inline constexpr int kDefaultRatersPerChat = 10;

/// Top-k chats by coherent votes (ties by ascending chat_id) among those
/// with at least `min_votes` coherent votes.
Selection select_top(const std::vector<ChatScore>& scores, std::size_t k, int min_votes = kDefaultMinCoherentVotes);

}  // namespace chatqe
