// SPDX-License-Identifier: Apache-2.0
//
// Shared data model for bilingual chat corpora: source chats, translation
// candidates, detector quads and labeled examples, plus their JSONL formats.
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chatqe/jsonl.hpp"

namespace chatqe {

enum class Lang { en, ja };
enum class Speaker { p1, p2 };
enum class SourceCorpus { persona, jpersona };
/// Producer of a translation candidate. Declaration order is the canonical
/// output order for candidates and examples.
enum class Origin { human, mt_low, mt_high };
enum class Verdict { correct, erroneous };
/// Named by source-target: en_ja means an English response translated into
/// Japanese is under evaluation.
enum class Direction { ja_en, en_ja };

inline constexpr std::array<Origin, 3> kAllOrigins{Origin::human, Origin::mt_low, Origin::mt_high};

std::string_view to_string(Lang v);
std::string_view to_string(Speaker v);
std::string_view to_string(SourceCorpus v);
std::string_view to_string(Origin v);
std::string_view to_string(Verdict v);
std::string_view to_string(Direction v);

// Parsers throw chatqe::Error on unknown names.
Lang parse_lang(std::string_view s);
Speaker parse_speaker(std::string_view s);
SourceCorpus parse_source_corpus(std::string_view s);
Origin parse_origin(std::string_view s);
Verdict parse_verdict(std::string_view s);
Direction parse_direction(std::string_view s);

Direction direction_of(Lang source, Lang target);
Lang source_lang(Direction d);
Lang target_lang(Direction d);
Lang other_lang(Lang l);

/// Trims ASCII whitespace and U+3000 (ideographic space).
std::string_view trim(std::string_view s);

/// Coordinates of one utterance in a corpus.
struct UtteranceKey {
  std::string chat_id;
  int index = 0;
  auto operator<=>(const UtteranceKey&) const = default;
};
std::string to_string(const UtteranceKey& k);

struct CandidateKey {
  std::string chat_id;
  int index = 0;
  Origin origin = Origin::human;
  auto operator<=>(const CandidateKey&) const = default;
};
std::string to_string(const CandidateKey& k);

struct Utterance {
  std::string chat_id;
  int index = 0;
  Speaker speaker = Speaker::p1;
  std::string text;
  bool operator==(const Utterance&) const = default;
};

struct Chat {
  std::string chat_id;
  SourceCorpus source_corpus = SourceCorpus::persona;
  Lang src_lang = Lang::en;
  Lang tgt_lang = Lang::ja;
  std::vector<std::vector<std::string>> personas;
  std::vector<Utterance> utterances;

  Direction direction() const { return direction_of(src_lang, tgt_lang); }
  bool operator==(const Chat&) const = default;
};

struct TranslationCandidate {
  std::string chat_id;
  int index = 0;
  Origin origin = Origin::human;
  Lang lang = Lang::ja;
  std::string text;
  std::optional<Verdict> verdict;

  CandidateKey key() const { return {chat_id, index, origin}; }
  bool operator==(const TranslationCandidate&) const = default;
};

struct ChatQuad {
  std::string ctx_src;
  std::string ctx_tgt;
  std::string resp_src;
  std::string resp_tgt;
  Direction direction = Direction::en_ja;
  std::string chat_id;
  int index = 1;
  Origin origin = Origin::human;
  bool operator==(const ChatQuad&) const = default;
};

struct LabeledExample {
  ChatQuad quad;
  Verdict label = Verdict::correct;
  bool operator==(const LabeledExample&) const = default;
};

/// Throws ValidationError naming the chat when an invariant is broken:
/// language pair, utterance count, contiguous indices, speaker alternation,
/// non-empty trimmed text.
void validate(const Chat& chat);

// Record <-> JSON. Field order follows the file schemas exactly.
json to_json(const Chat& chat);
Chat chat_from_json(const json& record);
json to_json(const TranslationCandidate& c);
TranslationCandidate candidate_from_json(const json& record);
json to_json(const LabeledExample& e);
LabeledExample example_from_json(const json& record);

std::vector<Chat> read_chats(const std::filesystem::path& path);
void write_chats(const std::vector<Chat>& chats, const std::filesystem::path& path);

/// Rejects duplicate (chat_id, index, origin) keys.
std::vector<TranslationCandidate> read_candidates(const std::filesystem::path& path);
void write_candidates(const std::vector<TranslationCandidate>& candidates,
                      const std::filesystem::path& path);

std::vector<LabeledExample> read_examples(const std::filesystem::path& path);
void write_examples(const std::vector<LabeledExample>& examples, const std::filesystem::path& path);

/// How the context translation (ctx_tgt) of a quad is chosen.
enum class ContextPolicy {
  /// First candidate labeled correct in order human, mt_high, mt_low; falls
  /// back to the human translation when none is correct.
  first_correct,
  /// Always the human translation.
  human,
};
std::string_view to_string(ContextPolicy p);
ContextPolicy parse_context_policy(std::string_view s);

/// True when every candidate carries verdict erroneous (and there is at
/// least one). Such an utterance cannot serve as trustworthy context and is
/// dropped as a response.
bool all_erroneous(const std::vector<const TranslationCandidate*>& candidates);

struct QuadBuildResult {
  std::vector<LabeledExample> examples;
  /// Response utterances (index >= 1) dropped because every candidate was
  /// erroneous, in corpus order.
  std::vector<UtteranceKey> dropped;
};

/// Turns labeled candidates into detector examples, one per candidate of
/// every retained response utterance (index >= 1).
/// Throws PipelineError for an utterance without candidates, a candidate
/// pointing outside the corpus, or a candidate without a verdict.
QuadBuildResult build_quads(const std::vector<Chat>& chats,
                            const std::vector<TranslationCandidate>& candidates,
                            ContextPolicy policy = ContextPolicy::first_correct);

}  // namespace chatqe
