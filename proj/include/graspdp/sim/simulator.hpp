#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graspdp/sim/catalog.hpp"
#include "graspdp/sim/world.hpp"

namespace graspdp {

// Pure predicate: gripper (x, y) inside the item's world grasp region,
// z <= z_grasp and commanded jaw width <= region width + w_tol.
bool grasp_success_predicate(const WorldState& state, const PlacedItem& item, const SimConfig& config);

// Deterministic planar pick-and-place world. All operations are pure functions
// of their arguments; a Simulator holds only immutable configuration and is
// safe to share between threads.
class Simulator {
 public:
  explicit Simulator(SceneCatalog catalog = SceneCatalog::standard());

  const SceneCatalog& catalog() const { return catalog_; }
  const SimConfig& config() const { return catalog_.sim; }
  const std::vector<CameraModel>& cameras() const { return cameras_; }
  const CameraModel& camera(int view_id) const;

  // Builds a TaskSpec with the family's target zone. For PickBig an empty
  // target defaults to the family's single target.
  TaskSpec make_task(TaskFamily family, int placement_id, const std::string& target_item = {}) const;

  WorldState reset(const TaskSpec& task, std::uint64_t seed) const;
  WorldState step(const WorldState& state, const ActionCommand& action) const;
  bool task_success(const WorldState& state) const;

  Image render(const WorldState& state, const CameraModel& view) const;
  std::vector<Image> render_all(const WorldState& state) const;
  std::vector<GraspBox> groundtruth_boxes(const WorldState& state, const CameraModel& view) const;

  // Maps an item's grasp region through a view; confidence 1.
  GraspBox region_box(const PlacedItem& item, const CameraModel& view) const;

  // Throws InvalidTaskError when the task violates TaskSpec invariants.
  void validate_task(const TaskSpec& task) const;

 private:
  SceneCatalog catalog_;
  std::vector<CameraModel> cameras_;
};

// Default cameras: top-down view 0 and an oblique view synthesized by
// foreshortening y.
std::vector<CameraModel> make_cameras(const SimConfig& config);

}  // namespace graspdp
