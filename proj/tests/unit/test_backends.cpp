// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "chatqe/backends.hpp"
#include "chatqe/bleu.hpp"
#include "chatqe/error.hpp"
#include "fixtures.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen parameter names.
#include <httplib.h>

using namespace chatqe;

namespace {

/// Local translation endpoint that upper-cases ASCII, optionally failing the
/// first `fail_first` requests with HTTP 503.
class FakeEndpoint {
 public:
  explicit FakeEndpoint(int fail_first = 0, int extra_outputs = 0) : fail_first_(fail_first), extra_(extra_outputs) {
    server_.Post("/translate", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++requests;
      last_body = req.body;
      if (n <= fail_first_) {
        res.status = 503;
        return;
      }
      const auto body = json::parse(req.body);
      json out = json::array();
      for (const auto& s : body["sentences"]) {
        auto t = s.get<std::string>();
        for (auto& c : t) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        out.push_back(t);
      }
      for (int i = 0; i < extra_; ++i) out.push_back("EXTRA");
      res.set_content(json{{"translations", out}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/translate"; }

  std::atomic<int> requests{0};
  std::string last_body;

 private:
  httplib::Server server_;
  int fail_first_;
  int extra_;
  int port_ = 0;
  std::thread thread_;
};

BackendConfig fast(std::string endpoint, int retries = 2) {
  BackendConfig c;
  c.endpoint = std::move(endpoint);
  c.retry_count = retries;
  c.backoff = std::chrono::milliseconds(1);
  c.timeout = std::chrono::milliseconds(2000);
  return c;
}

/// Echoes every sentence with a position tag so window stitching is visible.
class TaggingBackend final : public TranslationBackend {
 public:
  const std::string& name() const override { return name_; }
  Origin quality_tag() const override { return Origin::mt_high; }
  bool windowed() const override { return true; }
  std::vector<std::string> translate(const TranslationRequest& r) const override {
    ++calls;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < r.sentences.size(); ++i)
      out.push_back("[" + std::to_string(r.sentence_offset + static_cast<int>(i)) + ":" + r.sentences[i] + "]");
    return out;
  }
  mutable int calls = 0;

 private:
  std::string name_ = "tagging";
};

}  // namespace

TEST_CASE("sentence splitting keeps delimiters and handles both scripts") {
  CHECK(split_sentences("Hello there. How are you?! Fine") ==
        std::vector<std::string>{"Hello there.", "How are you?!", "Fine"});
  CHECK(split_sentences("こんにちは。元気ですか？はい") == std::vector<std::string>{"こんにちは。", "元気ですか？", "はい"});
  CHECK(split_sentences("No terminal") == std::vector<std::string>{"No terminal"});
  CHECK(join_sentences({"A.", "B."}, Lang::en) == "A. B.");
  CHECK(join_sentences({"あ。", "い。"}, Lang::ja) == "あ。い。");
}

TEST_CASE("mock backend is a pure function of seed, coordinates and text") {
  const DegradingMockBackend a("low", Origin::mt_low, 7, {0.3, 0.2});
  const DegradingMockBackend b("low", Origin::mt_low, 7, {0.3, 0.2});
  const DegradingMockBackend other("low", Origin::mt_low, 8, {0.3, 0.2});
  std::uint64_t state = 1;
  int differs = 0;
  for (int i = 0; i < 50; ++i) {
    const auto s = fixtures::random_sentence(Lang::en, 12, state);
    const UtteranceKey where{"c", i};
    CHECK(a.degrade(s, where, 0) == b.degrade(s, where, 0));
    differs += a.degrade(s, where, 0) != other.degrade(s, where, 0);
  }
  CHECK(differs > 0);
  const DegradingMockBackend identity("id", Origin::mt_high, 1, {});
  CHECK(identity.degrade("keep every word", {"c", 0}, 0) == "keep every word");
  const DegradingMockBackend drop_all("x", Origin::mt_low, 1, {1.0, 0.0});
  CHECK(drop_all.degrade("gone", {"c", 0}, 0) == "\xE2\x80\xA6");
  CHECK_THROWS_AS(DegradingMockBackend("bad", Origin::mt_low, 1, {1.5, 0}), ValidationError);
}

TEST_CASE("mock degradation lowers corpus BLEU against the references") {
  const DegradingMockBackend pass("pass", Origin::mt_high, 3, {});
  const DegradingMockBackend lossy("lossy", Origin::mt_low, 3, {0.3, 0.1});
  std::uint64_t state = 2;
  std::vector<std::string> refs, clean, noisy;
  for (int i = 0; i < 100; ++i) {
    refs.push_back(fixtures::random_sentence(Lang::ja, 15, state));
    const UtteranceKey where{"c", i};
    clean.push_back(translate_utterance(pass, "src", Lang::en, Lang::ja, where, refs.back()));
    noisy.push_back(translate_utterance(lossy, "src", Lang::en, Lang::ja, where, refs.back()));
  }
  const double b_clean = corpus_bleu(clean, refs);
  const double b_noisy = corpus_bleu(noisy, refs);
  CHECK(b_clean == 100.0);
  CHECK(b_noisy < b_clean);
}

TEST_CASE("windowed translation stitches two-sentence windows") {
  TaggingBackend t;
  const auto out = translate_windowed(t, {"a.", "b.", "c.", "d."}, Lang::en, Lang::ja);
  CHECK(out == std::vector<std::string>{"[0:a.]", "[1:b.]", "[2:c.]", "[3:d.]"});
  CHECK(t.calls == 3);
  CHECK(translate_windowed(t, {"solo."}, Lang::en, Lang::ja) == std::vector<std::string>{"[0:solo.]"});
  CHECK_THROWS_AS(translate_windowed(t, {}, Lang::en, Lang::ja), ValidationError);
}

TEST_CASE("generate_candidates preserves corpus and source order across workers") {
  Chat chat;
  chat.chat_id = "c";
  chat.src_lang = Lang::en;
  chat.tgt_lang = Lang::ja;
  for (int i = 0; i < 20; ++i)
    chat.utterances.push_back({"c", i, i % 2 ? Speaker::p2 : Speaker::p1, "word" + std::to_string(i) + " more text."});
  std::map<UtteranceKey, std::string> human;
  for (int i = 0; i < 20; ++i) human[{"c", i}] = "ref" + std::to_string(i) + " token token";
  const HumanFileBackend h("human", human);
  const DegradingMockBackend low("low", Origin::mt_low, 4, {0.5, 0.0});
  const DegradingMockBackend high("high", Origin::mt_high, 4, {});
  const std::vector<CandidateSource> sources{{Origin::mt_low, &low}, {Origin::human, &h}, {Origin::mt_high, &high}};
  const auto one = generate_candidates({chat}, sources, 1);
  const auto many = generate_candidates({chat}, sources, 4);
  CHECK(one == many);
  REQUIRE(one.size() == 60);
  CHECK(one[0].origin == Origin::mt_low);
  CHECK(one[1].origin == Origin::human);
  CHECK(one[1].text == "ref0 token token");
  // Non-human backends wrap the human reference, never the source text.
  CHECK(one[2].text == "ref0 token token");
  for (const auto& c : one) CHECK(c.lang == Lang::ja);
}

TEST_CASE("human file backend aligns by coordinates") {
  fixtures::TempDir dir;
  std::ofstream(dir / "h.jsonl") << R"({"chat_id":"c","index":0,"text":"やあ"})" "\n";
  const auto h = HumanFileBackend::from_file("human", dir / "h.jsonl");
  CHECK(translate_utterance(h, "hi", Lang::en, Lang::ja, {"c", 0}) == "やあ");
  CHECK_THROWS_AS(translate_utterance(h, "hi", Lang::en, Lang::ja, {"c", 1}), PipelineError);
}

TEST_CASE("remote backend speaks the JSON protocol and retries transient failures") {
  FakeEndpoint ep(2);
  RemoteBackend b("remote", Origin::mt_high, fast(ep.url(), 2));
  CHECK(translate_utterance(b, "hello", Lang::en, Lang::ja, {"c", 3}) == "HELLO");
  CHECK(ep.requests == 3);
  const auto sent = json::parse(ep.last_body);
  CHECK(sent == json{{"src_lang", "en"}, {"tgt_lang", "ja"}, {"sentences", {"hello"}}});
}

TEST_CASE("remote backend gives up after the retry budget") {
  FakeEndpoint ep(10);
  RemoteBackend b("remote", Origin::mt_high, fast(ep.url(), 1));
  CHECK_THROWS_WITH_AS(translate_utterance(b, "hello", Lang::en, Lang::ja, {"c", 3}),
                       doctest::Contains("(c, 3)"), BackendError);
  CHECK(ep.requests == 2);
}

TEST_CASE("remote backend rejects a sentence-count mismatch") {
  FakeEndpoint ep(0, 1);
  RemoteBackend b("remote", Origin::mt_high, fast(ep.url(), 0));
  CHECK_THROWS_AS(translate_utterance(b, "hello", Lang::en, Lang::ja), BackendError);
}

TEST_CASE("unreachable endpoint raises BackendError") {
  RemoteBackend b("remote", Origin::mt_high, fast("http://127.0.0.1:1/translate", 0));
  CHECK_THROWS_AS(translate_utterance(b, "hello", Lang::en, Lang::ja), BackendError);
}

TEST_CASE("factory resolves endpoints and honours the environment override") {
  auto mock = make_backend("low", Origin::mt_low, fast("mock:drop=1.0,seed=3"));
  CHECK(translate_utterance(*mock, "a b c", Lang::en, Lang::ja) == "\xE2\x80\xA6");
  CHECK_THROWS_AS(make_backend("low", Origin::mt_low, fast("mock:volume=11")), ValidationError);
  CHECK_THROWS_AS(make_backend("low", Origin::mt_low, fast("")), ValidationError);
  auto bad = fast("mock");
  bad.retry_count = -1;
  CHECK_THROWS_AS(make_backend("low", Origin::mt_low, bad), ValidationError);

  FakeEndpoint ep;
  ::setenv("CHATQE_BACKEND_MODEL_A_ENDPOINT", ep.url().c_str(), 1);
  auto remote = make_backend("model-a", Origin::mt_low, fast("mock"));
  ::unsetenv("CHATQE_BACKEND_MODEL_A_ENDPOINT");
  CHECK(translate_utterance(*remote, "hi", Lang::en, Lang::ja) == "HI");
}
