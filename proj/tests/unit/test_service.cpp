// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <set>
#include <thread>

#include "chatqe/backends.hpp"
#include "chatqe/error.hpp"
#include "chatqe/service/chat_service.hpp"
#include "chatqe/service/http_api.hpp"
#include "fixtures.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen parameter names.
#include <httplib.h>

using namespace chatqe;
using namespace chatqe::service;

namespace {

std::shared_ptr<const TranslationBackend> mock_backend() {
  return std::make_shared<DegradingMockBackend>("mock", Origin::mt_high, 1, Degradation{});
}

/// Fails every request while `fail` is set.
class FlakyBackend final : public TranslationBackend {
 public:
  const std::string& name() const override { return name_; }
  Origin quality_tag() const override { return Origin::mt_high; }
  std::vector<std::string> translate(const TranslationRequest& r) const override {
    if (fail) throw BackendError("endpoint down");
    return r.sentences;
  }
  std::atomic<bool> fail{false};

 private:
  std::string name_ = "flaky";
};

ServiceOptions quiet(std::filesystem::path storage = {}) {
  ServiceOptions o;
  o.storage_dir = std::move(storage);
  o.log = [](const std::string&) {};
  return o;
}

struct Chat2 {
  CreatedSession created;
  std::string id() const { return created.info.session_id; }
};

Chat2 open(ChatService& svc) { return {svc.create_session({"Alice", Lang::en}, {"Hanako", Lang::ja})}; }

}  // namespace

TEST_CASE("the first message has no context and is delivered unchecked") {
  auto stub = std::make_shared<fixtures::StubDetector>(std::vector<double>{0.9});
  ChatService svc(mock_backend(), stub, quiet());
  const auto c = open(svc);
  const auto m = svc.post_message(c.id(), "p1", "Hello there");
  CHECK(m.status == MessageStatus::unchecked);
  CHECK_FALSE(m.warning);
  CHECK_FALSE(m.prob_erroneous.has_value());
  CHECK(m.translated_text == "Hello there");
  CHECK(m.src_lang == Lang::en);
  CHECK(m.tgt_lang == Lang::ja);
  CHECK(stub->seen.empty());
  // A follow-up from the same sender still has no message from the other side.
  CHECK(svc.post_message(c.id(), "p1", "Anyone?").status == MessageStatus::unchecked);
}

TEST_CASE("replies are scored against the other participant's latest message") {
  auto stub = std::make_shared<fixtures::StubDetector>(std::vector<double>{0.9, 0.2});
  ChatService svc(mock_backend(), stub, quiet());
  const auto c = open(svc);
  svc.post_message(c.id(), "p1", "Did you have dinner?");
  const auto reply = svc.post_message(c.id(), "p2", "アメリカを食べました。");
  CHECK(reply.status == MessageStatus::checked);
  CHECK(reply.warning);
  CHECK(*reply.prob_erroneous == 0.9);
  REQUIRE(stub->seen.size() == 1);
  const auto& q = stub->seen[0];
  CHECK(q.ctx_src == "Did you have dinner?");
  CHECK(q.ctx_tgt == "Did you have dinner?");
  CHECK(q.resp_src == "アメリカを食べました。");
  CHECK(q.direction == Direction::ja_en);

  const auto revised = svc.revise_message(c.id(), "p2", reply.message_id, "ご飯を食べました。");
  CHECK(revised.status == MessageStatus::revised);
  CHECK_FALSE(revised.warning);
  CHECK(revised.supersedes == reply.message_id);
  CHECK(revised.seq == reply.seq + 1);
  CHECK(stub->seen.back().ctx_src == "Did you have dinner?");

  const auto events = svc.events(c.id(), 0);
  REQUIRE(events.size() == 3);
  CHECK(events[2].type == EventType::revision);
  for (std::size_t i = 0; i < events.size(); ++i) CHECK(events[i].message.seq == static_cast<long long>(i));
}

TEST_CASE("revision rules: ownership, recency, existence") {
  ChatService svc(mock_backend(), std::make_shared<fixtures::StubDetector>(std::vector<double>{0.1}), quiet());
  const auto c = open(svc);
  const auto a = svc.post_message(c.id(), "p1", "one");
  const auto b = svc.post_message(c.id(), "p1", "two");
  svc.post_message(c.id(), "p2", "みっつ");
  CHECK_THROWS_AS(svc.revise_message(c.id(), "p2", b.message_id, "x"), ForbiddenError);
  CHECK_THROWS_AS(svc.revise_message(c.id(), "p1", a.message_id, "x"), OrderingError);
  CHECK_THROWS_AS(svc.revise_message(c.id(), "p1", "m99", "x"), NotFoundError);
  CHECK_THROWS_AS(svc.revise_message("nope", "p1", a.message_id, "x"), NotFoundError);
  // The other side's later message does not block revising one's own latest.
  CHECK_NOTHROW(svc.revise_message(c.id(), "p1", b.message_id, "two!"));
  CHECK_THROWS_AS(svc.post_message(c.id(), "p1", "  "), ValidationError);
}

TEST_CASE("sessions require an en/ja pair and valid tokens") {
  ChatService svc(mock_backend(), nullptr, quiet());
  CHECK_THROWS_AS(svc.create_session({"A", Lang::en}, {"B", Lang::en}), ValidationError);
  CHECK_THROWS_AS(svc.create_session({"", Lang::en}, {"B", Lang::ja}), ValidationError);
  const auto c = open(svc);
  CHECK(svc.authenticate(c.id(), c.created.tokens[0]) == "p1");
  CHECK(svc.authenticate(c.id(), c.created.tokens[1]) == "p2");
  CHECK_THROWS_AS(svc.authenticate(c.id(), "forged"), AuthError);
  CHECK_THROWS_AS(svc.authenticate(c.id(), ""), AuthError);
  CHECK_THROWS_AS(svc.authenticate("s0", c.created.tokens[0]), NotFoundError);
  CHECK(c.created.tokens[0] != c.created.tokens[1]);
}

TEST_CASE("without a detector every message is delivered unchecked") {
  ChatService svc(mock_backend(), nullptr, quiet());
  CHECK_FALSE(svc.detector_available());
  const auto c = open(svc);
  svc.post_message(c.id(), "p1", "hi");
  const auto m = svc.post_message(c.id(), "p2", "やあ");
  CHECK(m.status == MessageStatus::unchecked);
  CHECK_FALSE(m.warning);
}

TEST_CASE("detector and translation failures degrade instead of dropping messages") {
  auto stub = std::make_shared<fixtures::StubDetector>(std::vector<double>{0.9});
  auto flaky = std::make_shared<FlakyBackend>();
  std::vector<std::string> log;
  auto opts = quiet();
  opts.log = [&](const std::string& line) { log.push_back(line); };
  ChatService svc(flaky, stub, opts);
  const auto c = open(svc);
  svc.post_message(c.id(), "p1", "hi");

  stub->fail = true;
  const auto unscored = svc.post_message(c.id(), "p2", "やあ");
  CHECK(unscored.status == MessageStatus::unchecked);
  CHECK_FALSE(unscored.warning);
  CHECK_FALSE(unscored.translation_error);
  stub->fail = false;

  flaky->fail = true;
  const auto degraded = svc.post_message(c.id(), "p1", "are you there?");
  CHECK(degraded.translation_error);
  CHECK(degraded.translated_text.empty());
  CHECK(degraded.status == MessageStatus::unchecked);
  CHECK(event_type_of(degraded) == EventType::degraded);
  flaky->fail = false;

  // A degraded message is not usable as context.
  const auto next = svc.post_message(c.id(), "p2", "うん");
  CHECK(next.status == MessageStatus::unchecked);
  CHECK(log.size() == 2);
  CHECK(svc.transcript(c.id()).size() == 4);
}

TEST_CASE("the warning threshold is inclusive and configurable") {
  auto stub = std::make_shared<fixtures::StubDetector>(std::vector<double>{0.5, 0.49, 0.7}, 0.5);
  auto opts = quiet();
  ChatService svc(mock_backend(), stub, opts);
  CHECK(svc.threshold() == 0.5);
  const auto c = open(svc);
  svc.post_message(c.id(), "p1", "a");
  CHECK(svc.post_message(c.id(), "p2", "い").warning);
  CHECK_FALSE(svc.post_message(c.id(), "p1", "c").warning);

  opts.threshold = 0.8;
  ChatService strict(mock_backend(), stub, opts);
  const auto d = open(strict);
  strict.post_message(d.id(), "p1", "a");
  CHECK_FALSE(strict.post_message(d.id(), "p2", "い").warning);
  opts.threshold = 1.5;
  CHECK_THROWS_AS(ChatService(mock_backend(), stub, opts), ValidationError);
}

TEST_CASE("concurrent session creation yields unique ids and tokens") {
  ChatService svc(mock_backend(), nullptr, quiet());
  std::vector<CreatedSession> made(100);
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 4; ++t)
      threads.emplace_back([&, t] {
        for (int i = t; i < 100; i += 4) made[i] = svc.create_session({"A", Lang::en}, {"B", Lang::ja});
      });
  }
  std::set<std::string> ids, tokens;
  for (const auto& m : made) {
    ids.insert(m.info.session_id);
    tokens.insert(m.tokens[0]);
    tokens.insert(m.tokens[1]);
  }
  CHECK(ids.size() == 100);
  CHECK(tokens.size() == 200);
}

TEST_CASE("concurrent posts get gap-free sequence numbers") {
  ChatService svc(mock_backend(), std::make_shared<fixtures::StubDetector>(std::vector<double>{0.3}), quiet());
  const auto c = open(svc);
  {
    std::vector<std::jthread> threads;
    for (const char* who : {"p1", "p2"})
      threads.emplace_back([&, who] {
        for (int i = 0; i < 50; ++i) svc.post_message(c.id(), who, std::string(who) + " says " + std::to_string(i));
      });
  }
  const auto t = svc.transcript(c.id());
  REQUIRE(t.size() == 100);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t[i].seq == static_cast<long long>(i));
    CHECK(t[i].message_id == "m" + std::to_string(i));
  }
}

TEST_CASE("wait_event blocks until a message arrives or the service stops") {
  ChatService svc(mock_backend(), nullptr, quiet());
  const auto c = open(svc);
  CHECK_FALSE(svc.wait_event(c.id(), 0, std::chrono::milliseconds(20)).has_value());
  std::jthread poster([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    svc.post_message(c.id(), "p1", "late");
  });
  const auto e = svc.wait_event(c.id(), 0, std::chrono::seconds(5));
  REQUIRE(e.has_value());
  CHECK(e->message.src_text == "late");
  poster.join();
  std::jthread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    svc.shutdown();
  });
  const auto start = std::chrono::steady_clock::now();
  CHECK_FALSE(svc.wait_event(c.id(), 1, std::chrono::seconds(10)).has_value());
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));
}

TEST_CASE("transcripts survive a restart byte for byte") {
  fixtures::TempDir dir;
  std::string id, before;
  std::array<std::string, 2> tokens;
  {
    ChatService svc(mock_backend(), std::make_shared<fixtures::StubDetector>(std::vector<double>{0.9, 0.1}),
                    quiet(dir.path()));
    const auto c = open(svc);
    id = c.id();
    tokens = c.created.tokens;
    svc.post_message(id, "p1", "hi");
    const auto r = svc.post_message(id, "p2", "こんにちは");
    svc.revise_message(id, "p2", r.message_id, "やあ");
    before = svc.transcript_json(id).dump();
  }
  ChatService again(mock_backend(), nullptr, quiet(dir.path()));
  CHECK(again.transcript_json(id).dump() == before);
  CHECK(again.authenticate(id, tokens[1]) == "p2");
  // The restored session keeps accepting messages with continuing seq.
  CHECK(again.post_message(id, "p1", "still here").seq == 3);
}

TEST_CASE("a corrupt transcript log is rejected on startup") {
  fixtures::TempDir dir;
  std::string id;
  {
    ChatService svc(mock_backend(), nullptr, quiet(dir.path()));
    id = open(svc).id();
    svc.post_message(id, "p1", "a");
    svc.post_message(id, "p2", "い");
  }
  const auto path = dir.path() / "sessions" / (id + ".jsonl");
  auto text = read_text_file(path);
  text.replace(text.find("\"seq\":1"), 7, "\"seq\":5");
  write_text_file(path, text);
  CHECK_THROWS_WITH_AS(ChatService(mock_backend(), nullptr, quiet(dir.path())), doctest::Contains("seq gap"),
                       ValidationError);
}

TEST_CASE("settings files are validated and the storage directory can be overridden") {
  const auto s = settings_from_json(json::parse(
      R"({"detector":{"threshold":0.7},"backend":{"endpoint":"mock:drop=0.1"},"server":{"port":9000},"storage":{"dir":"/tmp/x"}})"));
  CHECK(s.threshold == 0.7);
  CHECK(s.backend.endpoint == "mock:drop=0.1");
  CHECK(s.port == 9000);
  CHECK_THROWS_AS(settings_from_json(json::parse(R"({"frontend":{}})")), ValidationError);
  ::setenv("CHATQE_STORAGE_DIR", "/tmp/override", 1);
  const auto env = load_service_settings(std::nullopt);
  ::unsetenv("CHATQE_STORAGE_DIR");
  CHECK(env.storage_dir == "/tmp/override");
  CHECK(env.backend.endpoint == "mock");
}

// ---- HTTP ------------------------------------------------------------------

namespace {

class RunningServer {
 public:
  RunningServer(ChatService& svc, ApiOptions opts = {}) : api_(svc, opts) {
    port = api_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { api_.run(); });
  }
  ~RunningServer() {
    api_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    return c;
  }
  int port = 0;

 private:
  ApiServer api_;
  std::thread thread_;
};

httplib::Headers bearer(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

/// Reads SSE frames until `want` data lines arrived.
std::vector<json> read_events(const RunningServer& server, const std::string& path, std::size_t want,
                              const httplib::Headers& headers = {}) {
  auto c = server.client();
  std::string buffer;
  std::vector<json> out;
  c.Get(path, headers, [&](const char* data, std::size_t n) {
    buffer.append(data, n);
    for (std::size_t end; (end = buffer.find("\n\n")) != std::string::npos;) {
      const auto frame = buffer.substr(0, end);
      buffer.erase(0, end + 2);
      if (auto pos = frame.find("data: "); pos != std::string::npos) out.push_back(json::parse(frame.substr(pos + 6)));
    }
    return out.size() < want;
  });
  return out;
}

}  // namespace

TEST_CASE("HTTP API: create, post, revise, transcript and error statuses") {
  ChatService svc(mock_backend(), std::make_shared<fixtures::StubDetector>(std::vector<double>{0.9, 0.1}), quiet());
  RunningServer server(svc);
  auto c = server.client();

  auto res = c.Post("/sessions", R"({"participants":[{"name":"Alice","lang":"en"},{"name":"Hanako","lang":"ja"}]})",
                    "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 201);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  const auto created = json::parse(res->body);
  const std::string sid = created["session_id"];
  const std::string t1 = created["participants"][0]["token"];
  const std::string t2 = created["participants"][1]["token"];

  res = c.Post("/sessions/" + sid + "/messages", bearer(t1), R"({"text":"Did you eat?"})", "application/json");
  REQUIRE(res->status == 201);
  CHECK(json::parse(res->body)["status"] == "unchecked");
  res = c.Post("/sessions/" + sid + "/messages", bearer(t2), R"({"text":"アメリカを食べた"})", "application/json");
  const auto warned = json::parse(res->body);
  CHECK(warned["warning"] == true);
  CHECK(warned["status"] == "checked");

  res = c.Post("/sessions/" + sid + "/messages/m1/revision", bearer(t2), R"({"text":"ご飯を食べた"})",
               "application/json");
  REQUIRE(res->status == 201);
  CHECK(json::parse(res->body)["supersedes"] == "m1");

  res = c.Get("/sessions/" + sid + "/transcript", bearer(t1));
  REQUIRE(res->status == 200);
  CHECK(res->body == svc.transcript_json(sid).dump());

  CHECK(c.Post("/sessions/" + sid + "/messages/m1/revision", bearer(t1), R"({"text":"x"})", "application/json")->status ==
        403);
  CHECK(c.Post("/sessions/" + sid + "/messages/m1/revision", bearer(t2), R"({"text":"x"})", "application/json")->status ==
        409);
  CHECK(c.Post("/sessions/" + sid + "/messages", bearer("nope"), R"({"text":"x"})", "application/json")->status == 401);
  CHECK(c.Get("/sessions/" + sid + "/transcript")->status == 401);
  CHECK(c.Get("/sessions/sdeadbeef/transcript", bearer(t1))->status == 404);
  CHECK(c.Post("/sessions/" + sid + "/messages", bearer(t1), "{oops", "application/json")->status == 400);
  CHECK(c.Post("/sessions/" + sid + "/messages", bearer(t1), R"({"txt":"x"})", "application/json")->status == 400);
  CHECK(c.Post("/sessions", R"({"participants":[{"name":"A","lang":"ja"},{"name":"B","lang":"ja"}]})",
               "application/json")
            ->status == 400);
  CHECK(c.Options("/sessions")->status == 204);
}

TEST_CASE("HTTP API: both participants receive identical event streams") {
  ChatService svc(mock_backend(), std::make_shared<fixtures::StubDetector>(std::vector<double>{0.9, 0.1, 0.6}),
                  quiet());
  RunningServer server(svc, ApiOptions{std::chrono::milliseconds(50)});
  const auto c = open(svc);
  svc.post_message(c.id(), "p1", "hello");
  svc.post_message(c.id(), "p2", "こんにちは");

  std::vector<json> s1, s2;
  {
    std::jthread r1([&] { s1 = read_events(server, "/sessions/" + c.id() + "/events?from=0", 4, bearer(c.created.tokens[0])); });
    std::jthread r2([&] {
      s2 = read_events(server, "/sessions/" + c.id() + "/events?from=0&token=" + c.created.tokens[1], 4);
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    svc.revise_message(c.id(), "p2", "m1", "やあ");
    svc.post_message(c.id(), "p1", "hi again");
  }
  REQUIRE(s1.size() == 4);
  CHECK(s1 == s2);
  CHECK(s1[1]["message"]["warning"] == true);
  CHECK(s1[2]["type"] == "revision");
  CHECK(s1[2]["message"]["supersedes"] == "m1");
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i]["message"]["seq"] == i);

  // Resuming from a later seq, via query or Last-Event-ID.
  const auto tail = read_events(server, "/sessions/" + c.id() + "/events?from=2", 2, bearer(c.created.tokens[0]));
  CHECK(tail.front()["message"]["seq"] == 2);
  auto headers = bearer(c.created.tokens[0]);
  headers.emplace("Last-Event-ID", "2");
  CHECK(read_events(server, "/sessions/" + c.id() + "/events", 1, headers).front()["message"]["seq"] == 3);
}
