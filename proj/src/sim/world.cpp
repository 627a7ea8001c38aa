#include "graspdp/sim/world.hpp"

#include <cmath>
#include <string>

#include "graspdp/core/errors.hpp"

namespace graspdp {

std::string_view to_string(TaskFamily family) {
  switch (family) {
    case TaskFamily::kPickBig:
      return "PickBig";
    case TaskFamily::kPickCup:
      return "PickCup";
    case TaskFamily::kPickGoods:
      return "PickGoods";
  }
  return "unknown";
}

std::string_view to_string(Shape shape) { return shape == Shape::kDisc ? "disc" : "rect"; }

TaskFamily parse_family(std::string_view name) {
  if (name == "PickBig") return TaskFamily::kPickBig;
  if (name == "PickCup") return TaskFamily::kPickCup;
  if (name == "PickGoods") return TaskFamily::kPickGoods;
  throw InvalidTaskError("unknown task family '" + std::string(name) + "'");
}

Shape parse_shape(std::string_view name) {
  if (name == "rect") return Shape::kRect;
  if (name == "disc") return Shape::kDisc;
  throw ConfigError("unknown shape '" + std::string(name) + "'");
}

Vec2 CameraModel::to_pixel(Vec2 world) const {
  return {linear[0] * world.x + linear[1] * world.y + offset.x,
          linear[2] * world.x + linear[3] * world.y + offset.y};
}

Vec2 CameraModel::to_world(Vec2 pixel) const {
  const double det = determinant();
  if (std::abs(det) < 1e-12) throw ConfigError("camera affine map is singular");
  const double u = pixel.x - offset.x;
  const double v = pixel.y - offset.y;
  return {(linear[3] * u - linear[1] * v) / det, (-linear[2] * u + linear[0] * v) / det};
}

const PlacedItem* WorldState::find(std::string_view item_id) const {
  for (const auto& item : items)
    if (item.spec.item_id == item_id) return &item;
  return nullptr;
}

PlacedItem* WorldState::find(std::string_view item_id) {
  for (auto& item : items)
    if (item.spec.item_id == item_id) return &item;
  return nullptr;
}

Rect grasp_region_world(const PlacedItem& item) {
  const auto& r = item.spec.grasp_region;
  const double cx = item.pose.x + r.offset_x;
  const double cy = item.pose.y + r.offset_y;
  return {cx - r.width / 2.0, cy - r.height / 2.0, cx + r.width / 2.0, cy + r.height / 2.0};
}

}  // namespace graspdp
