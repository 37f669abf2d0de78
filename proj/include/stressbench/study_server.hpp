#pragma once

// HTTP+JSON front end of the study service.
//
//   POST /sessions                   {"subject_id"}            -> 201 {"session", "answered", "total"}
//   GET  /sessions/{id}/next                                   -> 200 {"complete", "trial"?, "answered", "total"}
//   POST /sessions/{id}/responses    {"trial_id", "choice", "response_ms"} -> 201
//   GET  /stats                                                -> 200 per-dataset choice statistics
//   GET  /audio/{ref}                                          -> 200 audio/wav
//
// Errors carry {"error", "message"}: 400 malformed body, 404 unknown session,
// trial or audio, 409 duplicate response, 410 stale session, 422 invalid choice.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "stressbench/study.hpp"

namespace httplib {
class Server;
}

namespace stressbench::study {

class HttpServer {
 public:
  explicit HttpServer(StudyService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~HttpServer();

  // port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void serve();
  void stop();

 private:
  StudyService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace stressbench::study
