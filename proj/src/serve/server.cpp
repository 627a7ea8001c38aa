#include "graspdp/serve/server.hpp"

#include <httplib.h>

#include "graspdp/core/errors.hpp"

namespace graspdp {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json error_body(const std::string& kind, const std::string& message) {
  return {{"error", kind}, {"message", message}};
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json(nullptr);
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ValidationError("body", std::string("body: malformed JSON: ") + e.what());
  }
}

template <typename F>
httplib::Server::Handler guarded(int ok_status, F f) {
  return [ok_status, f](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, ok_status, f(req));
    } catch (const NotFoundError& e) {
      send_json(res, 404, error_body("not_found", e.what()));
    } catch (const ValidationError& e) {
      json body = error_body("validation", e.what());
      body["field"] = e.field;
      // Malformed JSON is a bad request; well-formed but invalid values are 422.
      send_json(res, e.field == "body" ? 400 : 422, body);
    } catch (const BusyError& e) {
      send_json(res, 409, error_body("busy", e.what()));
    } catch (const PreconditionError& e) {
      send_json(res, 412, error_body("precondition", e.what()));
    } catch (const json::exception& e) {
      send_json(res, 400, error_body("bad_request", e.what()));
    } catch (const std::exception& e) {
      send_json(res, 500, error_body("internal", e.what()));
    }
  };
}

std::size_t param_size(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  try {
    std::size_t pos = 0;
    const long n = std::stol(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::logic_error&) {
    throw ValidationError(name, std::string(name) + ": must be a non-negative integer");
  }
}

bool param_flag(const httplib::Request& req, const char* name, bool fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ValidationError(name, std::string(name) + ": must be true or false");
}

}  // namespace

PromptServer::PromptServer(PromptService& service) : service_(service), http_(std::make_unique<httplib::Server>()) {
  auto& s = *http_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.Get("/health", guarded(200, [](const httplib::Request&) { return json{{"status", "ok"}}; }));
  s.Post("/session", guarded(201, [this](const httplib::Request& req) {
           const json body = parse_body(req);
           return service_.create_session(body.is_null() ? json::object() : body);
         }));
  s.Get(R"(/session/([^/]+)/scene)",
        guarded(200, [this](const httplib::Request& req) { return service_.scene(req.matches[1]); }));
  s.Post(R"(/session/([^/]+)/prompt)", guarded(200, [this](const httplib::Request& req) {
           return service_.post_prompt(req.matches[1], parse_body(req));
         }));
  s.Post(R"(/session/([^/]+)/rollout)", guarded(202, [this](const httplib::Request& req) {
           return service_.start_rollout(req.matches[1], parse_body(req));
         }));
  s.Get(R"(/session/([^/]+)/rollout/([^/]+))", guarded(200, [this](const httplib::Request& req) {
          return service_.rollout(req.matches[1], req.matches[2], param_size(req, "since", 0),
                                  param_flag(req, "images", true));
        }));
  s.Get(R"(/session/([^/]+)/history)",
        guarded(200, [this](const httplib::Request& req) { return service_.history(req.matches[1]); }));
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_json(res, res.status, error_body("not_found", "no such endpoint"));
  });
}

PromptServer::~PromptServer() { stop(); }

bool PromptServer::listen(const std::string& host, int port) { return http_->listen(host, port); }
int PromptServer::bind_any(const std::string& host) { return http_->bind_to_any_port(host); }
bool PromptServer::listen_after_bind() { return http_->listen_after_bind(); }
void PromptServer::stop() {
  if (http_->is_running()) http_->stop();
}
bool PromptServer::running() const { return http_->is_running(); }
void PromptServer::wait_until_ready() const { http_->wait_until_ready(); }

}  // namespace graspdp
