// SPDX-License-Identifier: Apache-2.0
//
// Synthetic corpora shared by the unit and acceptance suites.
#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "chatqe/coherence.hpp"
#include "chatqe/corpus.hpp"
#include "chatqe/detector/model.hpp"
#include "chatqe/detector/tokenizer.hpp"
#include "chatqe/labeling.hpp"
#include "chatqe/prediction.hpp"

namespace fixtures {

using namespace chatqe;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// ---- Sentinel corpus -----------------------------------------------------

inline constexpr const char* kSentinel = "※";

/// n examples alternating correct / erroneous in seeded order. Erroneous
/// examples carry kSentinel at a random position of resp_tgt, which is the
/// only thing separating the classes; a bag-of-tokens rule scores 1.0.
std::vector<LabeledExample> sentinel_examples(std::size_t n, std::uint64_t seed);

// ---- reference confusion fixture ---------------------------------

struct OriginCounts {
  Origin origin;
  long long tn, fp, fn, tp;
};

/// The twelve per-origin cells, exactly as reference.
const std::vector<OriginCounts>& reference_counts(Direction d);

/// Examples plus predictions whose joint counts equal reference_counts(d), for both
/// directions. Texts are placeholders; only keys and labels matter.
struct PredictionFixture {
  std::vector<LabeledExample> examples;
  std::vector<PredictionRecord> predictions;
};
PredictionFixture reference_fixture();

// ---- Dataset-shaped corpus ----------------------------------------------

/// 200 English chats with 2,940 utterances and 250 Japanese chats with
/// 2,740, three candidates per utterance, and planted good/bad ratings
/// (three raters each) that reproduce the reference deletion and bad-rate
/// counts under majority aggregation.
struct ShapedCorpus {
  std::vector<Chat> chats;
  std::vector<TranslationCandidate> candidates;  // no verdicts yet
  std::vector<TranslationRating> ratings;
};
ShapedCorpus shaped_corpus();

// ---- Coherence ratings ---------------------------------------------------

/// 1,500 chats, ten raters each. Chat i gets votes[i] coherent ratings,
/// with votes drawn from a seeded distribution.
struct RatingFixture {
  std::vector<CoherenceRating> ratings;
  std::vector<int> votes;  // by chat number
  static std::string chat_id(std::size_t i);
};
RatingFixture coherence_fixture(std::uint64_t seed);

// ---- Test doubles --------------------------------------------------------

/// One token per whitespace-separated word; counts calls.
class CountingTokenizer final : public detector::Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override;
  std::string id() const override { return "counting"; }
  mutable std::atomic<int> calls{0};
};

/// Returns scripted probabilities in call order (the last one repeats),
/// and records every quad it saw. Throws ModelError while `fail` is set.
class StubDetector final : public detector::ErrorDetector {
 public:
  explicit StubDetector(std::vector<double> probs, double threshold = 0.5)
      : probs_(std::move(probs)), threshold_(threshold) {}
  Prediction predict(const ChatQuad& quad) const override;
  double threshold() const override { return threshold_; }

  mutable std::vector<ChatQuad> seen;
  bool fail = false;

 private:
  std::vector<double> probs_;
  double threshold_;
  mutable std::size_t next_ = 0;
};

/// "w<k>" words for English and CJK ideographs for Japanese.
std::string random_sentence(Lang lang, int tokens, std::uint64_t& state);

}  // namespace fixtures
