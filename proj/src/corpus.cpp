// SPDX-License-Identifier: Apache-2.0
#include "chatqe/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "chatqe/error.hpp"

namespace chatqe {
namespace fs = std::filesystem;

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table,
             const char* what) {
  for (const auto& [value, name] : table)
    if (name == s) return value;
  throw Error(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E v, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [value, name] : table)
    if (value == v) return name;
  return "?";
}

constexpr std::array<std::pair<Lang, std::string_view>, 2> kLangs{{{Lang::en, "en"}, {Lang::ja, "ja"}}};
constexpr std::array<std::pair<Speaker, std::string_view>, 2> kSpeakers{
    {{Speaker::p1, "p1"}, {Speaker::p2, "p2"}}};
constexpr std::array<std::pair<SourceCorpus, std::string_view>, 2> kCorpora{
    {{SourceCorpus::persona, "persona"}, {SourceCorpus::jpersona, "jpersona"}}};
constexpr std::array<std::pair<Origin, std::string_view>, 3> kOrigins{
    {{Origin::human, "human"}, {Origin::mt_low, "mt_low"}, {Origin::mt_high, "mt_high"}}};
constexpr std::array<std::pair<Verdict, std::string_view>, 2> kVerdicts{
    {{Verdict::correct, "correct"}, {Verdict::erroneous, "erroneous"}}};
constexpr std::array<std::pair<Direction, std::string_view>, 2> kDirections{
    {{Direction::ja_en, "ja-en"}, {Direction::en_ja, "en-ja"}}};
constexpr std::array<std::pair<ContextPolicy, std::string_view>, 2> kPolicies{
    {{ContextPolicy::first_correct, "first-correct"}, {ContextPolicy::human, "human"}}};

}  // namespace

std::string_view to_string(Lang v) { return enum_name(v, kLangs); }
std::string_view to_string(Speaker v) { return enum_name(v, kSpeakers); }
std::string_view to_string(SourceCorpus v) { return enum_name(v, kCorpora); }
std::string_view to_string(Origin v) { return enum_name(v, kOrigins); }
std::string_view to_string(Verdict v) { return enum_name(v, kVerdicts); }
std::string_view to_string(Direction v) { return enum_name(v, kDirections); }
std::string_view to_string(ContextPolicy v) { return enum_name(v, kPolicies); }

Lang parse_lang(std::string_view s) { return parse_enum(s, kLangs, "language"); }
Speaker parse_speaker(std::string_view s) { return parse_enum(s, kSpeakers, "speaker"); }
SourceCorpus parse_source_corpus(std::string_view s) { return parse_enum(s, kCorpora, "source corpus"); }
Origin parse_origin(std::string_view s) { return parse_enum(s, kOrigins, "origin"); }
Verdict parse_verdict(std::string_view s) { return parse_enum(s, kVerdicts, "verdict"); }
Direction parse_direction(std::string_view s) { return parse_enum(s, kDirections, "direction"); }
ContextPolicy parse_context_policy(std::string_view s) {
  return parse_enum(s, kPolicies, "context policy");
}

Direction direction_of(Lang source, Lang target) {
  if (source == target) throw ValidationError("source and target language are both " + std::string(to_string(source)));
  return source == Lang::en ? Direction::en_ja : Direction::ja_en;
}
Lang source_lang(Direction d) { return d == Direction::en_ja ? Lang::en : Lang::ja; }
Lang target_lang(Direction d) { return d == Direction::en_ja ? Lang::ja : Lang::en; }
Lang other_lang(Lang l) { return l == Lang::en ? Lang::ja : Lang::en; }

std::string_view trim(std::string_view s) {
  static constexpr std::string_view kIdeographicSpace = "\xE3\x80\x80";
  auto is_space = [](unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); };
  for (;;) {
    if (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    else if (s.starts_with(kIdeographicSpace)) s.remove_prefix(kIdeographicSpace.size());
    else break;
  }
  for (;;) {
    if (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    else if (s.ends_with(kIdeographicSpace)) s.remove_suffix(kIdeographicSpace.size());
    else break;
  }
  return s;
}

std::string to_string(const UtteranceKey& k) { return "(" + k.chat_id + ", " + std::to_string(k.index) + ")"; }
std::string to_string(const CandidateKey& k) {
  return "(" + k.chat_id + ", " + std::to_string(k.index) + ", " + std::string(to_string(k.origin)) + ")";
}

void validate(const Chat& chat) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("chat " + chat.chat_id + ": " + what);
  };
  if (chat.chat_id.empty()) throw ValidationError("chat with empty chat_id");
  if (chat.src_lang == chat.tgt_lang) fail("src_lang and tgt_lang must differ");
  if (chat.utterances.size() < 2) fail("needs at least 2 utterances, has " + std::to_string(chat.utterances.size()));
  for (std::size_t i = 0; i < chat.utterances.size(); ++i) {
    const auto& u = chat.utterances[i];
    if (u.index != static_cast<int>(i))
      fail("utterance indices must be contiguous from 0; position " + std::to_string(i) + " has index " +
           std::to_string(u.index));
    if (u.chat_id != chat.chat_id) fail("utterance " + std::to_string(i) + " belongs to chat " + u.chat_id);
    if (i > 0 && u.speaker == chat.utterances[i - 1].speaker)
      fail("speakers must alternate; utterances " + std::to_string(i - 1) + " and " + std::to_string(i) +
           " are both " + std::string(to_string(u.speaker)));
    if (trim(u.text).empty()) fail("utterance " + std::to_string(i) + " has empty text");
  }
}

json to_json(const Chat& chat) {
  json utterances = json::array();
  for (const auto& u : chat.utterances)
    utterances.push_back({{"index", u.index}, {"speaker", to_string(u.speaker)}, {"text", u.text}});
  json personas = json::array();
  for (const auto& traits : chat.personas) personas.push_back(traits);
  return {{"chat_id", chat.chat_id},
          {"source_corpus", to_string(chat.source_corpus)},
          {"src_lang", to_string(chat.src_lang)},
          {"tgt_lang", to_string(chat.tgt_lang)},
          {"personas", std::move(personas)},
          {"utterances", std::move(utterances)}};
}

Chat chat_from_json(const json& r) {
  Chat chat;
  chat.chat_id = require_string(r, "chat_id");
  chat.source_corpus = parse_source_corpus(require_string(r, "source_corpus"));
  chat.src_lang = parse_lang(require_string(r, "src_lang"));
  chat.tgt_lang = parse_lang(require_string(r, "tgt_lang"));
  if (auto it = r.find("personas"); it != r.end()) {
    if (!it->is_array()) throw Error("field 'personas' must be an array");
    for (const auto& traits : *it) chat.personas.push_back(traits.get<std::vector<std::string>>());
  }
  const auto& us = require(r, "utterances");
  if (!us.is_array()) throw Error("field 'utterances' must be an array");
  for (const auto& u : us) {
    chat.utterances.push_back({chat.chat_id, static_cast<int>(require_integer(u, "index")),
                               parse_speaker(require_string(u, "speaker")), require_string(u, "text")});
  }
  return chat;
}

json to_json(const TranslationCandidate& c) {
  json j{{"chat_id", c.chat_id},
         {"index", c.index},
         {"origin", to_string(c.origin)},
         {"lang", to_string(c.lang)},
         {"text", c.text}};
  if (c.verdict) j["verdict"] = to_string(*c.verdict);
  return j;
}

TranslationCandidate candidate_from_json(const json& r) {
  TranslationCandidate c;
  c.chat_id = require_string(r, "chat_id");
  c.index = static_cast<int>(require_integer(r, "index"));
  if (c.index < 0) throw Error("field 'index' must be non-negative");
  c.origin = parse_origin(require_string(r, "origin"));
  c.lang = parse_lang(require_string(r, "lang"));
  c.text = require_string(r, "text");
  if (auto it = r.find("verdict"); it != r.end() && !it->is_null()) {
    if (!it->is_string()) throw Error("field 'verdict' must be a string");
    c.verdict = parse_verdict(it->get<std::string>());
  }
  return c;
}

json to_json(const LabeledExample& e) {
  const auto& q = e.quad;
  return {{"chat_id", q.chat_id},   {"index", q.index},       {"direction", to_string(q.direction)},
          {"origin", to_string(q.origin)}, {"ctx_src", q.ctx_src}, {"ctx_tgt", q.ctx_tgt},
          {"resp_src", q.resp_src}, {"resp_tgt", q.resp_tgt}, {"label", to_string(e.label)}};
}

LabeledExample example_from_json(const json& r) {
  LabeledExample e;
  auto& q = e.quad;
  q.chat_id = require_string(r, "chat_id");
  q.index = static_cast<int>(require_integer(r, "index"));
  q.direction = parse_direction(require_string(r, "direction"));
  q.origin = parse_origin(require_string(r, "origin"));
  q.ctx_src = require_string(r, "ctx_src");
  q.ctx_tgt = require_string(r, "ctx_tgt");
  q.resp_src = require_string(r, "resp_src");
  q.resp_tgt = require_string(r, "resp_tgt");
  e.label = parse_verdict(require_string(r, "label"));
  if (q.index < 1) throw ValidationError("example " + to_string(UtteranceKey{q.chat_id, q.index}) + ": index must be >= 1");
  return e;
}

std::vector<Chat> read_chats(const fs::path& path) {
  std::vector<Chat> chats;
  std::set<std::string> seen;
  read_jsonl(path, [&](const json& r, std::size_t) {
    auto chat = chat_from_json(r);
    validate(chat);
    if (!seen.insert(chat.chat_id).second) throw ValidationError("duplicate chat_id " + chat.chat_id);
    chats.push_back(std::move(chat));
  });
  return chats;
}

void write_chats(const std::vector<Chat>& chats, const fs::path& path) {
  AtomicFileWriter w(path);
  for (const auto& c : chats) w.write_line(to_json(c));
  w.commit();
}

std::vector<TranslationCandidate> read_candidates(const fs::path& path) {
  std::vector<TranslationCandidate> out;
  std::set<CandidateKey> seen;
  read_jsonl(path, [&](const json& r, std::size_t) {
    auto c = candidate_from_json(r);
    if (!seen.insert(c.key()).second) throw ValidationError("duplicate candidate " + to_string(c.key()));
    out.push_back(std::move(c));
  });
  return out;
}

void write_candidates(const std::vector<TranslationCandidate>& candidates, const fs::path& path) {
  AtomicFileWriter w(path);
  for (const auto& c : candidates) w.write_line(to_json(c));
  w.commit();
}

std::vector<LabeledExample> read_examples(const fs::path& path) {
  std::vector<LabeledExample> out;
  read_jsonl(path, [&](const json& r, std::size_t) { out.push_back(example_from_json(r)); });
  return out;
}

void write_examples(const std::vector<LabeledExample>& examples, const fs::path& path) {
  AtomicFileWriter w(path);
  for (const auto& e : examples) w.write_line(to_json(e));
  w.commit();
}

bool all_erroneous(const std::vector<const TranslationCandidate*>& candidates) {
  if (candidates.empty()) return false;
  for (const auto* c : candidates)
    if (c->verdict != Verdict::erroneous) return false;
  return true;
}

namespace {

const TranslationCandidate* pick_context(const std::vector<const TranslationCandidate*>& cands,
                                         ContextPolicy policy) {
  auto find = [&](Origin o) -> const TranslationCandidate* {
    for (const auto* c : cands)
      if (c->origin == o) return c;
    return nullptr;
  };
  if (policy == ContextPolicy::first_correct) {
    for (Origin o : {Origin::human, Origin::mt_high, Origin::mt_low}) {
      const auto* c = find(o);
      if (c && c->verdict == Verdict::correct) return c;
    }
  }
  if (const auto* h = find(Origin::human)) return h;
  // No human translation at all: the most reliable remaining producer.
  for (Origin o : {Origin::mt_high, Origin::mt_low})
    if (const auto* c = find(o)) return c;
  return nullptr;
}

}  // namespace

QuadBuildResult build_quads(const std::vector<Chat>& chats, const std::vector<TranslationCandidate>& candidates,
                            ContextPolicy policy) {
  std::map<UtteranceKey, std::vector<const TranslationCandidate*>> by_utterance;
  for (const auto& c : candidates) {
    if (!c.verdict) throw PipelineError("candidate " + to_string(c.key()) + " has no verdict");
    by_utterance[{c.chat_id, c.index}].push_back(&c);
  }
  for (auto& [key, list] : by_utterance)
    std::stable_sort(list.begin(), list.end(), [](const auto* a, const auto* b) { return a->origin < b->origin; });

  std::size_t matched = 0;
  QuadBuildResult result;
  for (const auto& chat : chats) {
    std::vector<const std::vector<const TranslationCandidate*>*> per_index;
    for (const auto& u : chat.utterances) {
      auto it = by_utterance.find({chat.chat_id, u.index});
      if (it == by_utterance.end() || it->second.empty())
        throw PipelineError("utterance " + to_string(UtteranceKey{chat.chat_id, u.index}) + " has no candidates");
      for (const auto* c : it->second)
        if (c->lang != chat.tgt_lang)
          throw PipelineError("candidate " + to_string(c->key()) + " is in " + std::string(to_string(c->lang)) +
                              " but the chat translates into " + std::string(to_string(chat.tgt_lang)));
      per_index.push_back(&it->second);
      matched += it->second.size();
    }
    const Direction dir = chat.direction();
    for (std::size_t i = 1; i < chat.utterances.size(); ++i) {
      const auto& resp = *per_index[i];
      if (all_erroneous(resp)) {
        result.dropped.push_back({chat.chat_id, static_cast<int>(i)});
        continue;
      }
      const auto* ctx = pick_context(*per_index[i - 1], policy);
      for (const auto* cand : resp) {
        LabeledExample e;
        e.quad = {chat.utterances[i - 1].text, ctx->text, chat.utterances[i].text, cand->text, dir,
                  chat.chat_id, static_cast<int>(i), cand->origin};
        e.label = *cand->verdict;
        result.examples.push_back(std::move(e));
      }
    }
  }
  if (matched != candidates.size()) {
    for (const auto& [key, list] : by_utterance) {
      bool found = false;
      for (const auto& chat : chats)
        if (chat.chat_id == key.chat_id && key.index >= 0 && key.index < static_cast<int>(chat.utterances.size()))
          found = true;
      if (!found) throw PipelineError("candidate for " + to_string(key) + " does not match any utterance");
    }
  }
  return result;
}

}  // namespace chatqe
