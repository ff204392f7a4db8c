// SPDX-License-Identifier: Apache-2.0
#include "chatqe/service/http_api.hpp"

#include <httplib.h>

namespace chatqe::service {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

/// Runs a handler and maps library exceptions onto HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const AuthError& e) {
    send_error(res, 401, e.what());
  } catch (const ForbiddenError& e) {
    send_error(res, 403, e.what());
  } catch (const OrderingError& e) {
    send_error(res, 409, e.what());
  } catch (const ValidationError& e) {
    send_error(res, 400, e.what());
  } catch (const ParseError& e) {
    send_error(res, 400, e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed JSON body: ") + e.what());
  } catch (const IoError& e) {
    send_error(res, 500, e.what());
  } catch (const Error& e) {
    // Field and enum diagnostics from the record helpers.
    send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

json parse_body(const httplib::Request& req) {
  auto body = json::parse(req.body);
  if (!body.is_object()) throw ValidationError("request body must be a JSON object");
  return body;
}

std::string bearer_token(const httplib::Request& req) {
  const auto header = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  if (header.rfind(kPrefix, 0) == 0) return header.substr(kPrefix.size());
  if (req.has_param("token")) return req.get_param_value("token");
  return {};
}

std::string sse_frame(const Event& e) {
  return "id: " + std::to_string(e.message.seq) + "\nevent: " + std::string(to_string(e.type)) +
         "\ndata: " + to_json(e).dump() + "\n\n";
}

}  // namespace

ApiServer::ApiServer(ChatService& service, ApiOptions options)
    : service_(service), options_(options), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const auto& ps = require(body, "participants");
      if (!ps.is_array() || ps.size() != 2) throw ValidationError("'participants' must list exactly two entries");
      const ParticipantSpec p1{require_string(ps[0], "name"), parse_lang(require_string(ps[0], "lang"))};
      const ParticipantSpec p2{require_string(ps[1], "name"), parse_lang(require_string(ps[1], "lang"))};
      const auto created = service_.create_session(p1, p2);
      json out = to_json(created.info);
      for (std::size_t i = 0; i < 2; ++i) out["participants"][i]["token"] = created.tokens[i];
      send_json(res, 201, out);
    });
  });

  srv.Post(R"(/sessions/([^/]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string sid = req.matches[1];
      const auto who = service_.authenticate(sid, bearer_token(req));
      const auto body = parse_body(req);
      send_json(res, 201, to_json(service_.post_message(sid, who, require_string(body, "text"))));
    });
  });

  srv.Post(R"(/sessions/([^/]+)/messages/([^/]+)/revision)",
           [this](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] {
               const std::string sid = req.matches[1];
               const std::string mid = req.matches[2];
               const auto who = service_.authenticate(sid, bearer_token(req));
               const auto body = parse_body(req);
               send_json(res, 201, to_json(service_.revise_message(sid, who, mid, require_string(body, "text"))));
             });
           });

  srv.Get(R"(/sessions/([^/]+)/transcript)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string sid = req.matches[1];
      service_.authenticate(sid, bearer_token(req));
      send_json(res, 200, service_.transcript_json(sid));
    });
  });

  srv.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string sid = req.matches[1];
      service_.authenticate(sid, bearer_token(req));
      long long from = 0;
      if (req.has_param("from")) {
        try {
          from = std::stoll(req.get_param_value("from"));
        } catch (const std::exception&) {
          throw ValidationError("'from' must be an integer");
        }
        if (from < 0) throw ValidationError("'from' must be non-negative");
      }
      // Last-Event-ID wins on browser reconnects.
      if (req.has_header("Last-Event-ID")) {
        try {
          from = std::stoll(req.get_header_value("Last-Event-ID")) + 1;
        } catch (const std::exception&) {
        }
      }
      auto next = std::make_shared<long long>(from);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, sid, next](std::size_t, httplib::DataSink& sink) {
        if (service_.stopping()) {
          sink.done();
          return true;
        }
        std::string chunk;
        if (auto e = service_.wait_event(sid, *next, options_.keepalive)) {
          chunk = sse_frame(*e);
          ++*next;
          // Drain whatever else is already available.
          for (const auto& more : service_.events(sid, *next)) {
            chunk += sse_frame(more);
            ++*next;
          }
        } else if (service_.stopping()) {
          sink.done();
          return true;
        } else {
          chunk = ": keepalive\n\n";
        }
        return sink.write(chunk.data(), chunk.size());
      });
    });
  });
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void ApiServer::run() { server_->listen_after_bind(); }

void ApiServer::stop() {
  service_.shutdown();
  if (server_) server_->stop();
}

}  // namespace chatqe::service
