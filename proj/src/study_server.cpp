#include "stressbench/study_server.hpp"

#include <httplib.h>
#include <json.hpp>

#include "stressbench/binio.hpp"

namespace stressbench::study {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

int http_status(Status s) {
  switch (s) {
    case Status::ok: return 200;
    case Status::unknown_session: return 404;
    case Status::stale_session: return 410;
    case Status::unknown_trial: return 404;
    case Status::invalid_choice: return 422;
    case Status::duplicate: return 409;
  }
  return 500;
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) {
      send_error(res, 400, "bad_request", "body must be a JSON object");
      return std::nullopt;
    }
    return j;
  } catch (const json::exception& e) {
    send_error(res, 400, "bad_request", std::string("invalid JSON: ") + e.what());
    return std::nullopt;
  }
}

}  // namespace

HttpServer::HttpServer(StudyService& service, std::optional<std::filesystem::path> static_dir)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;

  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req, res);
    if (!body) return;
    const auto it = body->find("subject_id");
    if (it == body->end() || !it->is_string() || it->get<std::string>().empty()) {
      send_error(res, 400, "bad_request", "subject_id (non-empty string) is required");
      return;
    }
    const auto subject = it->get<std::string>();
    const auto token = service_.create_session(subject);
    const auto p = service_.progress_of(subject);
    send_json(res, 201, {{"session", token}, {"subject_id", subject}, {"answered", p.answered}, {"total", p.total}});
  });

  srv.Get(R"(/sessions/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = service_.next_trial(req.matches[1]);
    if (r.status != Status::ok) {
      send_error(res, http_status(r.status), to_string(r.status),
                 r.status == Status::stale_session ? "session is stale" : "unknown session");
      return;
    }
    json out{{"complete", !r.trial.has_value()}, {"answered", r.progress.answered}, {"total", r.progress.total}};
    if (r.trial) {
      json cands = json::array();
      for (std::size_t k = 0; k < kCandidates; ++k) {
        cands.push_back({{"label", slot_name(k)}, {"audio", "/audio/" + r.trial->candidates[k]}});
      }
      out["trial"] = {{"trial_id", r.trial->trial_id}, {"reference", "/audio/" + r.trial->reference}, {"candidates", cands}};
    }
    send_json(res, 200, out);
  });

  srv.Post(R"(/sessions/([^/]+)/responses)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req, res);
    if (!body) return;
    const auto trial = body->find("trial_id");
    const auto choice = body->find("choice");
    if (trial == body->end() || !trial->is_string() || choice == body->end() || !choice->is_string()) {
      send_error(res, 400, "bad_request", "trial_id and choice (strings) are required");
      return;
    }
    std::int64_t ms = 0;
    if (const auto rt = body->find("response_ms"); rt != body->end()) {
      if (!rt->is_number_integer()) {
        send_error(res, 400, "bad_request", "response_ms must be an integer");
        return;
      }
      ms = rt->get<std::int64_t>();
    }
    const auto r = service_.submit(req.matches[1], trial->get<std::string>(), choice->get<std::string>(), ms);
    if (r.status != Status::ok) {
      send_error(res, http_status(r.status), to_string(r.status), r.message);
      return;
    }
    send_json(res, 201, {{"accepted", true}, {"answered", r.progress.answered}, {"total", r.progress.total}});
  });

  srv.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(stats_json(service_.stats()), "application/json");
  });

  srv.Get(R"(/audio/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto path = service_.audio_file(req.matches[1]);
    if (!path || !std::filesystem::is_regular_file(*path)) {
      send_error(res, 404, "not_found", "unknown audio ref");
      return;
    }
    const auto bytes = binio::read_file(*path);
    res.status = 200;
    res.set_content(std::string(bytes.begin(), bytes.end()), "audio/wav");
  });

  if (static_dir) {
    if (!srv.set_mount_point("/", static_dir->string())) {
      throw Error("study server: static directory not found: " + static_dir->string());
    }
  }
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error("study server: cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::serve() { server_->listen_after_bind(); }

void HttpServer::stop() { server_->stop(); }

}  // namespace stressbench::study
