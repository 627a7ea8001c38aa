#pragma once

#include <memory>
#include <string>

#include "graspdp/serve/service.hpp"

namespace httplib {
class Server;
}

namespace graspdp {

// HTTP+JSON front end for a PromptService. Error bodies are
// {"error": <kind>, "message": ..., "field"?: ...}.
class PromptServer {
 public:
  explicit PromptServer(PromptService& service);
  ~PromptServer();

  // Blocking; returns false if the socket could not be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and returns it, or -1. Serve with listen_after_bind.
  int bind_any(const std::string& host);
  bool listen_after_bind();
  void stop();
  bool running() const;
  void wait_until_ready() const;

 private:
  PromptService& service_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace graspdp
