#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "graspdp/core/types.hpp"

namespace graspdp {

enum class Shape { kRect, kDisc };
enum class TaskFamily { kPickBig, kPickCup, kPickGoods };

std::string_view to_string(TaskFamily family);
std::string_view to_string(Shape shape);
TaskFamily parse_family(std::string_view name);  // throws InvalidTaskError
Shape parse_shape(std::string_view name);        // throws ConfigError

// Item-local rectangle (meters) where a grasp is valid: handle, wall band or
// diameter. `width` doubles as the jaw opening the grasp needs.
struct GraspRegion {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double width = 0.0;
  double height = 0.0;
  friend bool operator==(const GraspRegion&, const GraspRegion&) = default;
};

struct ItemSpec {
  std::string item_id;
  int category = 0;
  Shape shape = Shape::kRect;
  Vec2 extent;  // (width, depth); disc diameter is extent.x
  GraspRegion grasp_region;
  bool graspable = true;
  friend bool operator==(const ItemSpec&, const ItemSpec&) = default;
};

struct GripperState {
  Vec3 position;
  double width = 0.0;
  double commanded_width = 0.0;
  std::optional<std::string> holding;
  friend bool operator==(const GripperState&, const GripperState&) = default;
};

struct Rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool contains(Vec2 p) const { return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max; }
  Vec2 center() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct TaskSpec {
  TaskFamily family = TaskFamily::kPickBig;
  int placement_id = 0;
  std::string target_item;
  Rect target_zone;
  std::optional<GraspBox> prompt_box;  // view-0 pixels
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Affine world (x, y) -> pixel (u, v) map: [u v] = A [x y] + b.
struct CameraModel {
  int view_id = 0;
  std::array<double, 4> linear{1.0, 0.0, 0.0, 1.0};  // row-major A
  Vec2 offset;
  int width = 96;
  int height = 96;

  Vec2 to_pixel(Vec2 world) const;
  Vec2 to_world(Vec2 pixel) const;  // throws ConfigError when A is singular
  double determinant() const { return linear[0] * linear[3] - linear[1] * linear[2]; }
};

struct PlacedItem {
  ItemSpec spec;
  Vec2 pose;
  bool ever_grasped = false;
  friend bool operator==(const PlacedItem&, const PlacedItem&) = default;
};

// One close event. `item_id` is the item that attached, if any; `on_target`
// is set when that item is the task target.
struct GraspEvent {
  int step = 0;
  Vec3 gripper;
  double commanded_width = 0.0;
  std::optional<std::string> item_id;
  bool on_target = false;
  friend bool operator==(const GraspEvent&, const GraspEvent&) = default;
};

struct WorldState {
  std::vector<PlacedItem> items;
  GripperState gripper;
  TaskSpec task;
  int step_count = 0;
  std::uint64_t rng_seed = 0;
  std::vector<GraspEvent> events;

  const PlacedItem* find(std::string_view item_id) const;
  PlacedItem* find(std::string_view item_id);
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

// World-frame rectangle of an item's grasp region at its current pose.
Rect grasp_region_world(const PlacedItem& item);

struct SimConfig {
  double workspace_half = 0.3;  // x, y in [-h, h]
  double z_max = 0.2;
  double width_max = 0.10;
  double z_grasp = 0.02;
  double w_tol = 0.005;
  double max_step = 0.02;    // per-axis displacement per step
  double width_rate = 0.02;  // jaw slew per step
  double close_threshold = 0.07;
  double release_threshold = 0.08;
  double jitter = 0.01;
  Vec3 home{0.0, -0.12, 0.12};
  int image_width = 96;
  int image_height = 96;
  int view_count = 2;
  double oblique_deg = 30.0;
  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

}  // namespace graspdp
