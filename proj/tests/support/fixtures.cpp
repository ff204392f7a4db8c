// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <stdexcept>

#include "chatqe/error.hpp"
#include "chatqe/text.hpp"

namespace fixtures {

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "chatqe-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

namespace {

std::uint64_t splitmix(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string encode_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

std::vector<std::string> random_tokens(Lang lang, int n, std::uint64_t& state) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    const auto r = splitmix(state);
    if (lang == Lang::en)
      out.push_back("w" + std::to_string(r % 400));
    else
      out.push_back(encode_utf8(static_cast<char32_t>(0x4E00 + r % 300)));
  }
  return out;
}

std::string join(const std::vector<std::string>& toks, Lang lang) {
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i > 0 && lang == Lang::en) s += ' ';
    s += toks[i];
  }
  return s;
}

}  // namespace

std::string random_sentence(Lang lang, int tokens, std::uint64_t& state) {
  return join(random_tokens(lang, tokens, state), lang);
}

std::vector<LabeledExample> sentinel_examples(std::size_t n, std::uint64_t seed) {
  std::uint64_t s = seed;
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto len = [&] { return 4 + static_cast<int>(splitmix(s) % 5); };
    LabeledExample e;
    e.quad.direction = Direction::en_ja;
    e.quad.chat_id = "sentinel-" + std::to_string(i);
    e.quad.index = 1;
    e.quad.ctx_src = random_sentence(Lang::en, len(), s);
    e.quad.ctx_tgt = random_sentence(Lang::ja, len(), s);
    e.quad.resp_src = random_sentence(Lang::en, len(), s);
    auto resp = random_tokens(Lang::ja, len(), s);
    e.label = (splitmix(s) & 1) ? Verdict::erroneous : Verdict::correct;
    if (e.label == Verdict::erroneous) {
      resp.insert(resp.begin() + static_cast<std::ptrdiff_t>(splitmix(s) % (resp.size() + 1)), kSentinel);
      e.quad.origin = Origin::mt_low;
    }
    e.quad.resp_tgt = join(resp, Lang::ja);
    out.push_back(std::move(e));
  }
  return out;
}

const std::vector<OriginCounts>& reference_counts(Direction d) {
  static const std::vector<OriginCounts> ja_en{{Origin::human, 1879, 207, 290, 21},
                                               {Origin::mt_low, 11, 155, 90, 2140},
                                               {Origin::mt_high, 1252, 590, 374, 181}};
  static const std::vector<OriginCounts> en_ja{{Origin::human, 2406, 176, 83, 9},
                                               {Origin::mt_low, 6, 265, 53, 2350},
                                               {Origin::mt_high, 1005, 758, 505, 406}};
  return d == Direction::ja_en ? ja_en : en_ja;
}

PredictionFixture reference_fixture() {
  PredictionFixture f;
  for (Direction d : {Direction::ja_en, Direction::en_ja}) {
    long long n = 0;
    for (const auto& c : reference_counts(d)) {
      auto emit = [&](long long count, Verdict truth, Verdict pred) {
        for (long long i = 0; i < count; ++i) {
          LabeledExample e;
          e.quad = {"ctx", "ctx", "resp", "resp", d, std::string(to_string(d)) + "-" + std::to_string(n++ / 3), 1,
                    c.origin};
          // Spread candidates over distinct chats so keys stay unique.
          e.quad.chat_id += "-" + std::string(to_string(c.origin)) + "-" + std::to_string(i);
          e.label = truth;
          PredictionRecord p{e.quad.chat_id, e.quad.index, c.origin, d,
                             {pred, pred == Verdict::erroneous ? 0.9 : 0.1}};
          f.examples.push_back(std::move(e));
          f.predictions.push_back(std::move(p));
        }
      };
      emit(c.tn, Verdict::correct, Verdict::correct);
      emit(c.fp, Verdict::correct, Verdict::erroneous);
      emit(c.fn, Verdict::erroneous, Verdict::correct);
      emit(c.tp, Verdict::erroneous, Verdict::erroneous);
    }
  }
  return f;
}

namespace {

void plant_ratings(const TranslationCandidate& c, bool bad, std::uint64_t& s, std::vector<TranslationRating>& out) {
  // Three raters; the minority vote is present half the time.
  const bool dissent = splitmix(s) & 1;
  for (int w = 0; w < 3; ++w) {
    TranslationRating r;
    r.chat_id = c.chat_id;
    r.index = c.index;
    r.origin = c.origin;
    r.worker_id = "rater" + std::to_string(w);
    const bool vote_bad = (w == 2 && dissent) ? !bad : bad;
    r.verdict = vote_bad ? RatingVerdict::bad : RatingVerdict::good;
    if (vote_bad) r.reasons = {static_cast<BadReason>(splitmix(s) % 6)};
    out.push_back(std::move(r));
  }
}

}  // namespace

ShapedCorpus shaped_corpus() {
  ShapedCorpus sc;
  std::uint64_t s = 2022;
  auto make_chats = [&](Lang src, int count, int long_chats, int long_len, const char* prefix) {
    for (int i = 0; i < count; ++i) {
      Chat chat;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%04d", prefix, i);
      chat.chat_id = id;
      chat.src_lang = src;
      chat.tgt_lang = other_lang(src);
      chat.source_corpus = src == Lang::en ? SourceCorpus::persona : SourceCorpus::jpersona;
      chat.personas = {{random_sentence(src, 4, s)}, {random_sentence(src, 4, s)}};
      const int len = i < long_chats ? long_len : long_len - 1;
      for (int k = 0; k < len; ++k)
        chat.utterances.push_back({chat.chat_id, k, k % 2 ? Speaker::p2 : Speaker::p1, random_sentence(src, 5, s)});
      sc.chats.push_back(std::move(chat));
    }
  };
  make_chats(Lang::en, 200, 140, 15, "en");  // 140*15 + 60*14 = 2940
  make_chats(Lang::ja, 250, 240, 11, "ja");  // 240*11 + 10*10 = 2740

  for (const auto& chat : sc.chats)
    for (const auto& u : chat.utterances)
      for (Origin o : kAllOrigins)
        sc.candidates.push_back({chat.chat_id, u.index, o, chat.tgt_lang, random_sentence(chat.tgt_lang, 5, s), {}});

  // Partition utterances: first utterances, and responses per source
  // language split into deleted / retained.
  std::vector<std::size_t> first, deleted, en_kept, ja_kept;
  std::size_t en_resp = 0, ja_resp = 0;
  for (std::size_t c = 0; c < sc.candidates.size(); c += 3) {
    const auto& cand = sc.candidates[c];
    if (cand.index == 0) {
      first.push_back(c);
    } else if (cand.lang == Lang::ja) {  // English source chat
      (en_resp++ % 41 == 0 && deleted.size() < 66 ? deleted : en_kept).push_back(c);
    } else {
      (ja_resp++ % 26 == 0 && deleted.size() < 159 ? deleted : ja_kept).push_back(c);
    }
  }

  std::vector<bool> bad(sc.candidates.size(), false);
  auto plant = [&](const std::vector<std::size_t>& group, std::size_t low, std::size_t high, std::size_t human) {
    const std::size_t n = group.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = group[i];  // candidates c, c+1, c+2 = human, mt_low, mt_high
      bad[c + 1] = i < low;
      bad[c + 2] = i >= n - high;
      bad[c] = i < human;
    }
  };
  plant(first, 400, 0, 24);
  plant(en_kept, 2400, 800, 206);
  plant(ja_kept, 2129, 759, 208);
  for (std::size_t c : deleted) bad[c] = bad[c + 1] = bad[c + 2] = true;

  for (std::size_t c = 0; c < sc.candidates.size(); ++c) plant_ratings(sc.candidates[c], bad[c], s, sc.ratings);
  return sc;
}

std::string RatingFixture::chat_id(std::size_t i) {
  char id[32];
  std::snprintf(id, sizeof id, "chat-%04zu", i);
  return id;
}

RatingFixture coherence_fixture(std::uint64_t seed) {
  RatingFixture f;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < 1500; ++i) {
    const int votes = static_cast<int>(rng() % 11);
    f.votes.push_back(votes);
    for (int w = 0; w < kDefaultRatersPerChat; ++w) {
      CoherenceRating r;
      r.chat_id = RatingFixture::chat_id(i);
      r.worker_id = "worker" + std::to_string((i + static_cast<std::size_t>(w) * 7) % 40);
      r.coherent = w < votes;
      if (!r.coherent) r.reasons = {static_cast<IncoherenceReason>(rng() % 5)};
      f.ratings.push_back(std::move(r));
    }
  }
  // Rating files are not grouped by chat.
  std::shuffle(f.ratings.begin(), f.ratings.end(), rng);
  return f;
}

std::vector<std::string> CountingTokenizer::tokenize(std::string_view text) const {
  ++calls;
  return text::split_whitespace(text);
}

Prediction StubDetector::predict(const ChatQuad& quad) const {
  if (fail) throw ModelError("stub detector offline");
  seen.push_back(quad);
  const double p = probs_.empty() ? 0.0 : probs_[std::min(next_, probs_.size() - 1)];
  ++next_;
  return Prediction::from_probability(p, threshold_);
}

}  // namespace fixtures
