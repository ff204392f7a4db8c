// SPDX-License-Identifier: Apache-2.0
#include "chatqe/service/chat_service.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

namespace chatqe::service {

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string_view to_string(MessageStatus s) {
  switch (s) {
    case MessageStatus::checked: return "checked";
    case MessageStatus::unchecked: return "unchecked";
    case MessageStatus::revised: return "revised";
  }
  return "unchecked";
}

std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::message: return "message";
    case EventType::revision: return "revision";
    case EventType::degraded: return "degraded";
  }
  return "message";
}

MessageStatus parse_message_status(std::string_view s) {
  if (s == "checked") return MessageStatus::checked;
  if (s == "unchecked") return MessageStatus::unchecked;
  if (s == "revised") return MessageStatus::revised;
  throw ValidationError("unknown message status '" + std::string(s) + "'");
}

json to_json(const Message& m) {
  return {{"message_id", m.message_id},
          {"sender", m.sender},
          {"seq", m.seq},
          {"src_lang", to_string(m.src_lang)},
          {"tgt_lang", to_string(m.tgt_lang)},
          {"src_text", m.src_text},
          {"translated_text", m.translated_text},
          {"prob_erroneous", optional_json(m.prob_erroneous)},
          {"warning", m.warning},
          {"status", to_string(m.status)},
          {"supersedes", optional_json(m.supersedes)},
          {"translation_error", m.translation_error}};
}

Message message_from_json(const json& j) {
  Message m;
  m.message_id = require_string(j, "message_id");
  m.sender = require_string(j, "sender");
  m.seq = require_integer(j, "seq");
  m.src_lang = parse_lang(require_string(j, "src_lang"));
  m.tgt_lang = parse_lang(require_string(j, "tgt_lang"));
  m.src_text = require_string(j, "src_text");
  m.translated_text = require_string(j, "translated_text");
  if (!require(j, "prob_erroneous").is_null()) m.prob_erroneous = require_number(j, "prob_erroneous");
  m.warning = require_bool(j, "warning");
  m.status = parse_message_status(require_string(j, "status"));
  if (!require(j, "supersedes").is_null()) m.supersedes = require_string(j, "supersedes");
  m.translation_error = require_bool(j, "translation_error");
  return m;
}

EventType event_type_of(const Message& m) {
  if (m.translation_error) return EventType::degraded;
  return m.supersedes ? EventType::revision : EventType::message;
}

json to_json(const Event& e) { return {{"type", to_string(e.type)}, {"message", to_json(e.message)}}; }

json to_json(const SessionInfo& s) {
  json ps = json::array();
  for (const auto& p : s.participants)
    ps.push_back({{"participant_id", p.participant_id}, {"display_name", p.display_name}, {"lang", to_string(p.lang)}});
  return {{"session_id", s.session_id}, {"created_at", s.created_at}, {"participants", std::move(ps)}};
}

struct ChatService::SessionState {
  SessionInfo info;
  std::array<std::string, 2> tokens;
  std::filesystem::path log_path;
  /// Held for the whole admission pipeline, so seq and context are stable.
  std::mutex admission;
  /// Guards `messages`; held only briefly.
  mutable std::mutex mutex;
  mutable std::condition_variable cv;
  std::vector<Message> messages;

  int participant_index(const std::string& id) const {
    for (int i = 0; i < 2; ++i)
      if (info.participants[i].participant_id == id) return i;
    return -1;
  }
};

ChatService::ChatService(std::shared_ptr<const TranslationBackend> backend,
                         std::shared_ptr<const detector::ErrorDetector> detector, ServiceOptions options)
    : backend_(std::move(backend)),
      detector_(std::move(detector)),
      options_(std::move(options)),
      rng_(std::random_device{}()) {
  if (!backend_) throw ValidationError("chat service needs a translation backend");
  threshold_ = options_.threshold.value_or(detector_ ? detector_->threshold() : kDefaultThreshold);
  if (!(threshold_ >= 0.0 && threshold_ <= 1.0)) throw ValidationError("threshold must be in [0, 1]");
  if (!options_.log) options_.log = [](const std::string& line) { std::cerr << utc_now() << " " << line << "\n"; };
  if (!options_.storage_dir.empty()) load_all();
}

ChatService::~ChatService() { shutdown(); }

std::string ChatService::random_hex(std::size_t bytes) {
  std::lock_guard lock(rng_mutex_);
  std::string out;
  char buf[17];
  while (out.size() < bytes * 2) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng_()));
    out += buf;
  }
  out.resize(bytes * 2);
  return out;
}

CreatedSession ChatService::create_session(const ParticipantSpec& p1, const ParticipantSpec& p2) {
  if (p1.lang == p2.lang)
    throw ValidationError("unsupported language pair " + std::string(to_string(p1.lang)) + "-" +
                          std::string(to_string(p2.lang)) + "; participants must use en and ja");
  for (const auto* p : {&p1, &p2})
    if (trim(p->name).empty()) throw ValidationError("participant name must be non-empty");

  auto s = std::make_shared<SessionState>();
  s->info.created_at = utc_now();
  s->info.participants = {Participant{"p1", p1.name, p1.lang}, Participant{"p2", p2.name, p2.lang}};
  s->tokens = {random_hex(16), random_hex(16)};
  {
    std::lock_guard lock(sessions_mutex_);
    do {
      s->info.session_id = "s" + random_hex(8);
    } while (sessions_.count(s->info.session_id));
    sessions_.emplace(s->info.session_id, s);
  }
  if (!options_.storage_dir.empty()) {
    s->log_path = options_.storage_dir / "sessions" / (s->info.session_id + ".jsonl");
    json record = {{"record", "session"}, {"session", to_json(s->info)}, {"tokens", s->tokens}};
    std::lock_guard lock(s->mutex);
    persist(*s, record);
  }
  return {s->info, s->tokens};
}

std::shared_ptr<ChatService::SessionState> ChatService::find(const std::string& session_id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("session '" + session_id + "' not found");
  return it->second;
}

std::string ChatService::authenticate(const std::string& session_id, const std::string& token) const {
  const auto s = find(session_id);
  if (token.empty()) throw AuthError("missing access token");
  for (int i = 0; i < 2; ++i)
    if (s->tokens[i] == token) return s->info.participants[i].participant_id;
  throw AuthError("access token not valid for session '" + session_id + "'");
}

Message ChatService::post_message(const std::string& session_id, const std::string& participant_id,
                                  const std::string& text) {
  const auto s = find(session_id);
  std::lock_guard admission(s->admission);
  return admit(*s, participant_id, text, std::nullopt);
}

Message ChatService::revise_message(const std::string& session_id, const std::string& participant_id,
                                    const std::string& message_id, const std::string& new_text) {
  const auto s = find(session_id);
  std::lock_guard admission(s->admission);
  std::optional<Message> target, latest_own;
  {
    std::lock_guard lock(s->mutex);
    for (const auto& m : s->messages) {
      if (m.message_id == message_id) target = m;
      if (m.sender == participant_id) latest_own = m;
    }
  }
  if (!target) throw NotFoundError("message '" + message_id + "' not found in session '" + session_id + "'");
  if (target->sender != participant_id)
    throw ForbiddenError("message '" + message_id + "' belongs to another participant");
  if (latest_own->message_id != message_id)
    throw OrderingError("only the latest message can be revised; '" + message_id + "' was followed by '" +
                        latest_own->message_id + "'");
  return admit(*s, participant_id, new_text, message_id);
}

Message ChatService::admit(SessionState& s, const std::string& participant_id, const std::string& text,
                           const std::optional<std::string>& supersedes) {
  const int me = s.participant_index(participant_id);
  if (me < 0) throw AuthError("'" + participant_id + "' is not a participant of this session");
  if (trim(text).empty()) throw ValidationError("message text must be non-empty");
  const Participant& sender = s.info.participants[me];
  const Participant& other = s.info.participants[1 - me];

  Message m;
  m.sender = participant_id;
  m.src_lang = sender.lang;
  m.tgt_lang = other.lang;
  m.src_text = text;
  m.supersedes = supersedes;
  std::optional<Message> context;
  {
    std::lock_guard lock(s.mutex);
    m.seq = static_cast<long long>(s.messages.size());
    for (auto it = s.messages.rbegin(); it != s.messages.rend(); ++it)
      if (it->sender == other.participant_id) {
        context = *it;
        break;
      }
  }
  m.message_id = "m" + std::to_string(m.seq);

  // (1) translate
  try {
    m.translated_text =
        translate_utterance(*backend_, text, sender.lang, other.lang, UtteranceKey{s.info.session_id, (int)m.seq});
  } catch (const std::exception& e) {
    m.translation_error = true;
    options_.log("session " + s.info.session_id + " " + m.message_id + ": translation failed, delivering degraded: " +
                 e.what());
  }

  // (2)-(3) score against the other participant's latest message
  if (!m.translation_error && context && !context->translation_error && detector_) {
    ChatQuad q;
    q.ctx_src = context->src_text;
    q.ctx_tgt = context->translated_text;
    q.resp_src = m.src_text;
    q.resp_tgt = m.translated_text;
    q.direction = direction_of(m.src_lang, m.tgt_lang);
    q.chat_id = s.info.session_id;
    q.index = static_cast<int>(m.seq);
    try {
      const auto p = detector_->predict(q);
      m.prob_erroneous = p.prob_erroneous;
      m.warning = p.prob_erroneous >= threshold_;
      m.status = supersedes ? MessageStatus::revised : MessageStatus::checked;
    } catch (const std::exception& e) {
      options_.log("session " + s.info.session_id + " " + m.message_id + ": detector failed, delivering unchecked: " +
                   e.what());
    }
  }

  // (4) append and notify every subscriber
  {
    std::lock_guard lock(s.mutex);
    json record = {{"record", "message"}};
    record.update(to_json(m));
    persist(s, record);
    s.messages.push_back(m);
  }
  s.cv.notify_all();
  return m;
}

void ChatService::persist(SessionState& s, const json& record) {
  if (s.log_path.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(s.log_path.parent_path(), ec);
  std::ofstream out(s.log_path, std::ios::binary | std::ios::app);
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to " + s.log_path.string());
}

void ChatService::load_all() {
  const auto dir = options_.storage_dir / "sessions";
  if (!std::filesystem::exists(dir)) return;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    auto s = std::make_shared<SessionState>();
    s->log_path = file;
    bool header = false;
    read_jsonl(file, [&](const json& r, std::size_t) {
      const auto kind = require_string(r, "record");
      if (kind == "session") {
        if (header) throw ValidationError("duplicate session record");
        const auto& info = require(r, "session");
        s->info.session_id = require_string(info, "session_id");
        s->info.created_at = require_string(info, "created_at");
        const auto& ps = require(info, "participants");
        if (!ps.is_array() || ps.size() != 2) throw ValidationError("a session has exactly two participants");
        for (std::size_t i = 0; i < 2; ++i)
          s->info.participants[i] = {require_string(ps[i], "participant_id"), require_string(ps[i], "display_name"),
                                     parse_lang(require_string(ps[i], "lang"))};
        const auto& tokens = require(r, "tokens");
        if (!tokens.is_array() || tokens.size() != 2) throw ValidationError("expected two tokens");
        s->tokens = {tokens[0].get<std::string>(), tokens[1].get<std::string>()};
        header = true;
      } else if (kind == "message") {
        if (!header) throw ValidationError("message before session record");
        auto m = message_from_json(r);
        if (m.seq != static_cast<long long>(s->messages.size()))
          throw ValidationError("seq gap: expected " + std::to_string(s->messages.size()) + ", found " +
                                std::to_string(m.seq));
        s->messages.push_back(std::move(m));
      } else {
        throw ValidationError("unknown record type '" + kind + "'");
      }
    });
    if (!header) throw ValidationError(file.string() + " has no session record");
    sessions_.emplace(s->info.session_id, s);
  }
  options_.log("restored " + std::to_string(files.size()) + " session(s) from " + dir.string());
}

SessionInfo ChatService::session(const std::string& session_id) const { return find(session_id)->info; }

std::vector<Message> ChatService::transcript(const std::string& session_id) const {
  const auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  return s->messages;
}

json ChatService::transcript_json(const std::string& session_id) const {
  const auto s = find(session_id);
  json messages = json::array();
  {
    std::lock_guard lock(s->mutex);
    for (const auto& m : s->messages) messages.push_back(to_json(m));
  }
  return {{"session", to_json(s->info)}, {"messages", std::move(messages)}};
}

std::vector<Event> ChatService::events(const std::string& session_id, long long from) const {
  const auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  std::vector<Event> out;
  for (auto i = static_cast<std::size_t>(std::max(0LL, from)); i < s->messages.size(); ++i)
    out.push_back({event_type_of(s->messages[i]), s->messages[i]});
  return out;
}

std::optional<Event> ChatService::wait_event(const std::string& session_id, long long from,
                                             std::chrono::milliseconds timeout) const {
  const auto s = find(session_id);
  const auto index = static_cast<std::size_t>(std::max(0LL, from));
  std::unique_lock lock(s->mutex);
  s->cv.wait_for(lock, timeout, [&] { return s->messages.size() > index || stopping_.load(); });
  if (s->messages.size() <= index) return std::nullopt;
  return Event{event_type_of(s->messages[index]), s->messages[index]};
}

void ChatService::shutdown() {
  stopping_ = true;
  std::lock_guard lock(sessions_mutex_);
  for (auto& [id, s] : sessions_) {
    std::lock_guard inner(s->mutex);
    s->cv.notify_all();
  }
}

ServiceSettings settings_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("service settings must be a JSON object");
  const std::set<std::string> known{"detector", "backend", "server", "storage"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ValidationError("unknown settings section '" + k + "'");
  ServiceSettings s;
  s.backend.endpoint = "mock";
  auto section = [&](const char* name) -> const json* {
    if (!j.contains(name)) return nullptr;
    if (!j[name].is_object()) throw ValidationError(std::string("settings section '") + name + "' must be an object");
    return &j[name];
  };
  try {
    if (const auto* d = section("detector")) {
      if (d->contains("model_path") && !(*d)["model_path"].is_null())
        s.model_path = (*d)["model_path"].get<std::string>();
      if (d->contains("threshold")) s.threshold = (*d)["threshold"].get<double>();
    }
    if (const auto* b = section("backend")) {
      s.backend_name = b->value("name", s.backend_name);
      s.backend.endpoint = b->value("endpoint", s.backend.endpoint);
      s.backend.timeout = std::chrono::milliseconds(b->value("timeout_ms", s.backend.timeout.count()));
      s.backend.retry_count = b->value("retry_count", s.backend.retry_count);
      s.backend.seed = b->value("seed", s.backend.seed);
    }
    if (const auto* sv = section("server")) {
      s.host = sv->value("host", s.host);
      s.port = sv->value("port", s.port);
    }
    if (const auto* st = section("storage")) s.storage_dir = st->value("dir", s.storage_dir.string());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad service settings: ") + e.what());
  }
  if (s.threshold && !(*s.threshold >= 0.0 && *s.threshold <= 1.0))
    throw ValidationError("detector.threshold must be in [0, 1]");
  if (s.port < 0 || s.port > 65535) throw ValidationError("server.port out of range");
  validate(s.backend);
  return s;
}

ServiceSettings load_service_settings(const std::optional<std::filesystem::path>& path) {
  ServiceSettings s;
  if (path) {
    json j;
    try {
      j = json::parse(read_text_file(*path));
    } catch (const json::parse_error& e) {
      throw ParseError(path->string(), 1, e.what());
    }
    s = settings_from_json(j);
  } else {
    s = settings_from_json(json::object());
  }
  if (const char* dir = std::getenv("CHATQE_STORAGE_DIR"); dir && *dir) s.storage_dir = dir;
  return s;
}

}  // namespace chatqe::service
