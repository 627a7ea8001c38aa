#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "graspdp/demo/episode.hpp"
#include "graspdp/det/detector.hpp"
#include "graspdp/det/oracle.hpp"
#include "graspdp/policy/policy.hpp"
#include "graspdp/policy/trainer.hpp"
#include "graspdp/sim/simulator.hpp"

namespace graspdp {

// Where the conditioning box comes from at each step.
enum class BoxSource { kOracle, kTrained, kPrompt };
std::string to_string(BoxSource s);
BoxSource parse_box_source(const std::string& s);

struct RolloutOptions {
  int execution_horizon = 8;  // actions executed per predicted chunk, in [1, 16]
  int max_steps = 200;
  BoxSource box_source = BoxSource::kOracle;
  CorruptionConfig corruption;  // oracle source only
  bool record_views = false;
};

struct RolloutJob {
  TaskSpec task;
  std::uint64_t seed = 0;
  friend bool operator==(const RolloutJob&, const RolloutJob&) = default;
};

// Called after each executed action with the episode so far.
using FrameCallback = std::function<void(std::size_t job, const EpisodeRecord& partial)>;

// Receding-horizon rollouts, run in lock step so the policy is queried with
// one batch per decision point. Records are bit-exact for a fixed job list;
// across batch compositions they agree to float rounding only. `detector` is required for the trained source; prompt mode
// feeds task.prompt_box verbatim at every step.
std::vector<EpisodeRecord> rollout_batch(Policy& policy, const Simulator& sim, const std::vector<RolloutJob>& jobs,
                                         const RolloutOptions& options, const Detector* detector = nullptr,
                                         const FrameCallback& on_frame = {});

EpisodeRecord rollout(Policy& policy, const Simulator& sim, const TaskSpec& task, std::uint64_t seed,
                      const RolloutOptions& options, const Detector* detector = nullptr,
                      const FrameCallback& on_frame = {});

// Throws ConfigError when policy, detector and simulator disagree on the
// category count or image geometry.
void check_compatible(const Policy& policy, const Simulator& sim, const Detector* detector);

}  // namespace graspdp
