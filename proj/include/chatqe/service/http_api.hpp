// SPDX-License-Identifier: Apache-2.0
//
// HTTP+JSON front end of the chat relay:
//   POST /sessions
//   POST /sessions/{id}/messages
//   POST /sessions/{id}/messages/{mid}/revision
//   GET  /sessions/{id}/transcript
//   GET  /sessions/{id}/events?from={seq}   (text/event-stream)
// Participants authenticate with "Authorization: Bearer <token>"; the
// events endpoint also accepts ?token= because browser EventSource cannot
// set headers.
#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "chatqe/service/chat_service.hpp"

namespace httplib {
class Server;
}

namespace chatqe::service {

struct ApiOptions {
  /// Idle interval after which the event stream sends a keep-alive comment.
  std::chrono::milliseconds keepalive{15'000};
};

class ApiServer {
 public:
  explicit ApiServer(ChatService& service, ApiOptions options = {});
  ~ApiServer();

  /// Binds to `port` (0 picks a free one) and returns the bound port, or
  /// throws IoError.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  void stop();

 private:
  ChatService& service_;
  ApiOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace chatqe::service
