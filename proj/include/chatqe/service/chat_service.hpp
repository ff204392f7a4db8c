// SPDX-License-Identifier: Apache-2.0
//
// Two-party chat relay: every message is translated into the other
// participant's language, scored by the error detector against the other
// participant's latest message, and delivered to both sides with the same
// warning flag.
#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chatqe/backends.hpp"
#include "chatqe/corpus.hpp"
#include "chatqe/detector/model.hpp"
#include "chatqe/error.hpp"

namespace chatqe::service {

class NotFoundError : public Error {
 public:
  using Error::Error;
};
/// Missing or unknown access token.
class AuthError : public Error {
 public:
  using Error::Error;
};
/// Valid token, but the participant may not perform the action.
class ForbiddenError : public Error {
 public:
  using Error::Error;
};
/// Revision of a message that is not the sender's latest.
class OrderingError : public Error {
 public:
  using Error::Error;
};

enum class MessageStatus { checked, unchecked, revised };
enum class EventType { message, revision, degraded };
std::string_view to_string(MessageStatus s);
std::string_view to_string(EventType t);
MessageStatus parse_message_status(std::string_view s);

struct Participant {
  std::string participant_id;
  std::string display_name;
  Lang lang = Lang::en;
  bool operator==(const Participant&) const = default;
};

struct Message {
  std::string message_id;
  std::string sender;
  long long seq = 0;
  Lang src_lang = Lang::en;
  Lang tgt_lang = Lang::ja;
  std::string src_text;
  std::string translated_text;
  std::optional<double> prob_erroneous;
  bool warning = false;
  MessageStatus status = MessageStatus::unchecked;
  std::optional<std::string> supersedes;
  bool translation_error = false;
  bool operator==(const Message&) const = default;
};

json to_json(const Message& m);
Message message_from_json(const json& j);

/// One event per admitted message; its seq is the message's seq.
struct Event {
  EventType type = EventType::message;
  Message message;
};
json to_json(const Event& e);
EventType event_type_of(const Message& m);

struct ParticipantSpec {
  std::string name;
  Lang lang = Lang::en;
};

struct SessionInfo {
  std::string session_id;
  std::string created_at;
  std::array<Participant, 2> participants;
};
json to_json(const SessionInfo& s);

struct CreatedSession {
  SessionInfo info;
  /// Bearer token per participant, in participant order.
  std::array<std::string, 2> tokens;
};

struct ServiceOptions {
  /// Warning threshold on prob_erroneous; unset means the detector's own.
  std::optional<double> threshold;
  /// Append-only transcript logs live in <storage_dir>/sessions. Empty
  /// disables persistence.
  std::filesystem::path storage_dir;
  /// Operator log; defaults to stderr.
  std::function<void(const std::string&)> log;
};

class ChatService {
 public:
  /// `detector` may be null: every message is then delivered unchecked.
  /// Replays every stored session when storage_dir is set.
  ChatService(std::shared_ptr<const TranslationBackend> backend, std::shared_ptr<const detector::ErrorDetector> detector,
              ServiceOptions options = {});
  ~ChatService();
  ChatService(const ChatService&) = delete;
  ChatService& operator=(const ChatService&) = delete;

  /// Throws ValidationError unless the two languages are en and ja.
  CreatedSession create_session(const ParticipantSpec& p1, const ParticipantSpec& p2);

  /// Participant id owning `token` in the session; AuthError otherwise.
  std::string authenticate(const std::string& session_id, const std::string& token) const;

  Message post_message(const std::string& session_id, const std::string& participant_id, const std::string& text);
  Message revise_message(const std::string& session_id, const std::string& participant_id,
                         const std::string& message_id, const std::string& new_text);

  SessionInfo session(const std::string& session_id) const;
  std::vector<Message> transcript(const std::string& session_id) const;
  /// Canonical JSON transcript, as served over HTTP.
  json transcript_json(const std::string& session_id) const;

  /// Events with seq >= from, available now.
  std::vector<Event> events(const std::string& session_id, long long from) const;
  /// Blocks until an event with seq >= from exists, the timeout passes, or
  /// the service shuts down.
  std::optional<Event> wait_event(const std::string& session_id, long long from,
                                  std::chrono::milliseconds timeout) const;

  /// Wakes every waiter; later waits return immediately.
  void shutdown();
  bool stopping() const { return stopping_.load(); }
  bool detector_available() const { return static_cast<bool>(detector_); }
  double threshold() const { return threshold_; }

 private:
  struct SessionState;
  std::shared_ptr<SessionState> find(const std::string& session_id) const;
  Message admit(SessionState& s, const std::string& participant_id, const std::string& text,
                const std::optional<std::string>& supersedes);
  void persist(SessionState& s, const json& record);
  void load_all();
  std::string random_hex(std::size_t bytes);

  std::shared_ptr<const TranslationBackend> backend_;
  std::shared_ptr<const detector::ErrorDetector> detector_;
  ServiceOptions options_;
  double threshold_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<SessionState>> sessions_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
  std::atomic<bool> stopping_{false};
};

/// Deployment settings read from a JSON file:
/// {"detector": {"model_path", "threshold"}, "backend": {"name", "endpoint",
///  "timeout_ms", "retry_count"}, "server": {"host", "port"},
///  "storage": {"dir"}}. CHATQE_STORAGE_DIR overrides storage.dir.
struct ServiceSettings {
  std::optional<std::filesystem::path> model_path;
  std::optional<double> threshold;
  std::string backend_name = "chat";
  BackendConfig backend;
  std::string host = "0.0.0.0";
  int port = 8080;
  std::filesystem::path storage_dir = "chatqe-data";
};

ServiceSettings settings_from_json(const json& j);
ServiceSettings load_service_settings(const std::optional<std::filesystem::path>& path);

}  // namespace chatqe::service
