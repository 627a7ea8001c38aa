#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "graspdp/core/types.hpp"
#include "graspdp/sim/simulator.hpp"

namespace graspdp {

inline constexpr int kDatasetFormatVersion = 1;

// One timestep of observations. `item_poses`, `held_index` and the gripper
// fields are a complete scene snapshot, so views can be re-rendered when a
// dataset was stored without pixels (see materialize_views).
struct ObservationFrame {
  std::vector<Image> views;
  Vec3 eef_pose;
  double gripper_width = 0.0;
  std::vector<GraspBox> boxes;  // view-0 pixels
  int timestep = 0;
  std::vector<Vec2> item_poses;
  int held_index = -1;
  // Box actually fed to the policy at this step (rollouts only).
  std::optional<GraspBox> conditioning;
  friend bool operator==(const ObservationFrame&, const ObservationFrame&) = default;
};

struct EpisodeOutcome {
  bool task_success = false;
  int grasp_successes = 0;
  int grasp_attempts = 0;
  std::optional<std::string> first_grasped;
  friend bool operator==(const EpisodeOutcome&, const EpisodeOutcome&) = default;
};

struct EpisodeRecord {
  std::string episode_id;
  TaskSpec task;
  std::uint64_t seed = 0;
  std::vector<ObservationFrame> frames;
  std::vector<ActionCommand> actions;  // actions[i] is executed after frames[i]
  std::vector<GraspEvent> events;
  EpisodeOutcome outcome;
  std::string box_source = "oracle";  // "oracle" or "detector"
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

nlohmann::json task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& j);
nlohmann::json box_to_json(const GraspBox& box);  // [category, cx, cy, w, h, confidence]
GraspBox box_from_json(const nlohmann::json& j);

// Snapshot of `state` as an observation frame (views rendered when requested).
ObservationFrame observe(const Simulator& sim, const WorldState& state, bool render_views);

// Outcome implied by a final state's event log.
EpisodeOutcome outcome_from(const Simulator& sim, const WorldState& final_state);

// Rebuilds the world state shown by a frame of an episode.
WorldState frame_state(const Simulator& sim, const EpisodeRecord& episode, const ObservationFrame& frame);

// Fills frame.views by re-rendering when they are absent.
void materialize_views(const Simulator& sim, const EpisodeRecord& episode, ObservationFrame& frame);

// Re-executes the stored actions from reset(task, seed); returns the final
// state. Used for replay-fidelity checks.
WorldState replay(const Simulator& sim, const EpisodeRecord& episode);

// HDF5 episode files. `with_views` controls whether pixels are written. Frames
// read from a file without pixels (or with load_views = false) have empty
// views; materialize_views fills them.
void write_episode(const std::filesystem::path& path, const EpisodeRecord& episode, bool with_views);
EpisodeRecord read_episode(const std::filesystem::path& path, bool load_views = true);
bool episode_has_views(const std::filesystem::path& path);

}  // namespace graspdp
