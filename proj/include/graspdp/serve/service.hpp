#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "graspdp/det/detector.hpp"
#include "graspdp/eval/rollout.hpp"

namespace graspdp {

struct ServiceConfig {
  std::map<std::string, std::filesystem::path> policies;  // name -> checkpoint
  std::optional<std::filesystem::path> detector;
  int execution_horizon = 8;
  int max_steps = 200;
};

// Session logic behind the HTTP layer. Every call takes and returns JSON
// bodies; failures surface as NotFoundError, ValidationError, BusyError,
// PreconditionError or ConfigError. Sessions are independent: each has its
// own lock and at most one rollout thread.
class PromptService {
 public:
  PromptService(const Simulator& sim, const ServiceConfig& config);
  ~PromptService();
  PromptService(const PromptService&) = delete;
  PromptService& operator=(const PromptService&) = delete;

  // In-memory registration, used by tests and embedding code.
  void add_policy(const std::string& name, const Policy& policy);
  void set_detector(const Detector& detector);

  nlohmann::json create_session(const nlohmann::json& body);
  nlohmann::json scene(const std::string& session_id) const;
  nlohmann::json post_prompt(const std::string& session_id, const nlohmann::json& body);
  nlohmann::json start_rollout(const std::string& session_id, const nlohmann::json& body);
  nlohmann::json rollout(const std::string& session_id, const std::string& rollout_id, std::size_t since = 0,
                         bool images = true) const;
  nlohmann::json history(const std::string& session_id) const;

  // Full record of a finished rollout (views kept only for the latest one).
  std::optional<EpisodeRecord> rollout_record(const std::string& session_id, const std::string& rollout_id) const;
  // The task a rollout of this session would run with the active prompt.
  TaskSpec prompted_task(const std::string& session_id) const;
  RolloutOptions rollout_options(const std::string& session_id) const;
  // Blocks until the session has no running rollout.
  void wait_idle(const std::string& session_id) const;

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<const Policy> policy(const std::string& name) const;

  const Simulator& sim_;
  ServiceConfig config_;
  mutable std::mutex registry_mu_;
  std::map<std::string, std::shared_ptr<const Policy>> policies_;
  std::shared_ptr<const Detector> detector_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  int next_session_ = 1;
  std::atomic<bool> stopping_{false};
};

}  // namespace graspdp
