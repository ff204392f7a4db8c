// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "chatqe/coherence.hpp"
#include "chatqe/error.hpp"
#include "fixtures.hpp"

using namespace chatqe;

namespace {

CoherenceRating vote(std::string chat, std::string worker, bool coherent) {
  CoherenceRating r{std::move(chat), std::move(worker), coherent, {}};
  if (!coherent) r.reasons = {IncoherenceReason::hard_to_follow};
  return r;
}

/// Walks vote levels from 10 down and takes chats in id order within a level.
std::vector<std::string> oracle_top(const std::vector<int>& votes, std::size_t k, int min_votes) {
  std::vector<std::string> out;
  for (int level = 10; level >= min_votes && out.size() < k; --level)
    for (std::size_t i = 0; i < votes.size() && out.size() < k; ++i)
      if (votes[i] == level) out.push_back(fixtures::RatingFixture::chat_id(i));
  return out;
}

}  // namespace

TEST_CASE("score_chats counts coherent votes per chat") {
  const std::vector<CoherenceRating> rs{vote("b", "w1", true), vote("a", "w1", false), vote("b", "w2", true),
                                        vote("a", "w2", true)};
  const auto scores = score_chats(rs);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0] == ChatScore{"a", 1, 2});
  CHECK(scores[1] == ChatScore{"b", 2, 2});
  auto dup = rs;
  dup.push_back(vote("a", "w1", true));
  CHECK_THROWS_AS(score_chats(dup), ValidationError);
}

TEST_CASE("select_top breaks ties by chat id and reports shortfall") {
  const std::vector<ChatScore> scores{{"c", 8, 10}, {"a", 8, 10}, {"b", 9, 10}, {"d", 6, 10}, {"e", 7, 10}};
  const auto sel = select_top(scores, 3);
  CHECK(sel.chat_ids == std::vector<std::string>{"b", "a", "c"});
  CHECK(sel.shortfall == 0);
  const auto all = select_top(scores, 10);
  CHECK(all.chat_ids == std::vector<std::string>{"b", "a", "c", "e"});
  CHECK(all.shortfall == 6);
  CHECK(select_top(scores, 10, 0).chat_ids.size() == 5);
}

TEST_CASE("top 200 of 1,500 rated chats matches an independent ranking") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto fx = fixtures::coherence_fixture(seed);
    const auto sel = select_top(score_chats(fx.ratings), 200);
    const auto expected = oracle_top(fx.votes, 200, kDefaultMinCoherentVotes);
    CHECK(sel.chat_ids == expected);
    CHECK(sel.shortfall == 200 - expected.size());
  }
}

TEST_CASE("selection is invariant under rating order") {
  auto fx = fixtures::coherence_fixture(9);
  const auto a = select_top(score_chats(fx.ratings), 200);
  std::reverse(fx.ratings.begin(), fx.ratings.end());
  CHECK(select_top(score_chats(fx.ratings), 200).chat_ids == a.chat_ids);
}

TEST_CASE("rating records enforce the reason taxonomy") {
  const auto r = vote("c", "w", false);
  CHECK(to_json(r).dump() == R"({"chat_id":"c","worker_id":"w","coherent":false,"reasons":["hard_to_follow"]})");
  CHECK(coherence_rating_from_json(to_json(r)) == r);
  CHECK_THROWS_AS(coherence_rating_from_json(json::parse(R"({"chat_id":"c","worker_id":"w","coherent":false})")),
                  Error);
  CHECK_THROWS_AS(coherence_rating_from_json(json::parse(
                      R"({"chat_id":"c","worker_id":"w","coherent":true,"reasons":["out_of_order"]})")),
                  Error);
  CHECK_THROWS_AS(
      coherence_rating_from_json(json::parse(R"({"chat_id":"c","worker_id":"w","coherent":false,"reasons":["boring"]})")),
      Error);
}
