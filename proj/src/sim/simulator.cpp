#include "graspdp/sim/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"

namespace graspdp {

namespace {

using Color = std::array<std::uint8_t, 3>;

constexpr Color kBackground{30, 30, 30};
constexpr Color kZone{60, 60, 92};
constexpr Color kJaw{255, 230, 0};

Color category_color(int category) {
  static constexpr std::array<Color, 11> kPalette{{
      {128, 128, 128},  // unknown
      {214, 120, 40},   // block
      {150, 150, 150},  // grey mug
      {50, 90, 220},    // blue plastic cup
      {220, 40, 40},    // red paper cup
      {40, 180, 70},    // green mug
      {110, 170, 245},  // blue plastic cup (diameter)
      {120, 70, 30},    // chocolate bar
      {230, 200, 120},  // biscuit
      {200, 40, 200},   // candy tube
      {240, 240, 240},  // tissue pack
  }};
  if (category >= 0 && category < static_cast<int>(kPalette.size())) return kPalette[category];
  const auto c = static_cast<std::uint8_t>(40 + (category * 53) % 200);
  return {c, static_cast<std::uint8_t>(255 - c), 128};
}

Color darker(Color c) {
  return {static_cast<std::uint8_t>(c[0] * 6 / 10), static_cast<std::uint8_t>(c[1] * 6 / 10),
          static_cast<std::uint8_t>(c[2] * 6 / 10)};
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

double approach(double from, double to, double rate) { return from + clamp(to - from, -rate, rate); }

// Fills every pixel whose center maps (through the inverse camera affine) into
// the world-space shape.
template <typename Inside>
void fill_shape(Image& image, const CameraModel& view, Rect world_bounds, Inside inside, Color color) {
  double u_min = std::numeric_limits<double>::infinity(), u_max = -u_min;
  double v_min = u_min, v_max = -u_min;
  for (const Vec2 corner : {Vec2{world_bounds.x_min, world_bounds.y_min}, Vec2{world_bounds.x_min, world_bounds.y_max},
                            Vec2{world_bounds.x_max, world_bounds.y_min}, Vec2{world_bounds.x_max, world_bounds.y_max}}) {
    const Vec2 p = view.to_pixel(corner);
    u_min = std::min(u_min, p.x);
    u_max = std::max(u_max, p.x);
    v_min = std::min(v_min, p.y);
    v_max = std::max(v_max, p.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(u_min)) - 1);
  const int x1 = std::min(image.width - 1, static_cast<int>(std::ceil(u_max)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(v_min)) - 1);
  const int y1 = std::min(image.height - 1, static_cast<int>(std::ceil(v_max)) + 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 w = view.to_world({x + 0.5, y + 0.5});
      if (!inside(w)) continue;
      std::uint8_t* px = image.at(x, y);
      px[0] = color[0];
      px[1] = color[1];
      px[2] = color[2];
    }
  }
}

void fill_rect(Image& image, const CameraModel& view, Rect r, Color color) {
  fill_shape(image, view, r, [&](Vec2 p) { return r.contains(p); }, color);
}

void draw_item(Image& image, const CameraModel& view, const PlacedItem& item) {
  const auto& spec = item.spec;
  const Color color = category_color(spec.category);
  const double hx = spec.extent.x / 2.0;
  const double hy = spec.extent.y / 2.0;
  const Rect bounds{item.pose.x - hx, item.pose.y - hy, item.pose.x + hx, item.pose.y + hy};
  if (spec.shape == Shape::kDisc) {
    const double r2 = hx * hx;
    fill_shape(
        image, view, bounds,
        [&](Vec2 p) {
          const double dx = p.x - item.pose.x;
          const double dy = p.y - item.pose.y;
          return dx * dx + dy * dy <= r2;
        },
        color);
  } else {
    fill_rect(image, view, bounds, color);
  }
  // Off-center grasp regions are physical features (handle, rim band) and are
  // drawn in a darker shade.
  const auto& r = spec.grasp_region;
  if (r.offset_x != 0.0 || r.offset_y != 0.0) fill_rect(image, view, grasp_region_world(item), darker(color));
}

}  // namespace

bool grasp_success_predicate(const WorldState& state, const PlacedItem& item, const SimConfig& config) {
  const auto& g = state.gripper;
  const Rect region = grasp_region_world(item);
  return region.contains({g.position.x, g.position.y}) && g.position.z <= config.z_grasp &&
         g.commanded_width <= item.spec.grasp_region.width + config.w_tol;
}

std::vector<CameraModel> make_cameras(const SimConfig& config) {
  std::vector<CameraModel> cams;
  const double scale_x = config.image_width / (2.0 * config.workspace_half);
  const double scale_y = config.image_height / (2.0 * config.workspace_half);
  const Vec2 center{config.image_width / 2.0, config.image_height / 2.0};
  for (int v = 0; v < config.view_count; ++v) {
    CameraModel cam;
    cam.view_id = v;
    cam.width = config.image_width;
    cam.height = config.image_height;
    cam.offset = center;
    if (v == 0) {
      cam.linear = {scale_x, 0.0, 0.0, -scale_y};
    } else {
      // Oblique views foreshorten depth and pan slightly per extra view.
      const double tilt = config.oblique_deg * v * std::numbers::pi / 180.0;
      const double fore = std::cos(std::min(tilt, 1.2));
      cam.linear = {scale_x * 0.9, 0.0, 0.0, -scale_y * fore};
      cam.offset = {center.x, center.y + 2.0 * v};
    }
    cams.push_back(cam);
  }
  return cams;
}

Simulator::Simulator(SceneCatalog catalog) : catalog_(std::move(catalog)) {
  catalog_.validate();
  cameras_ = make_cameras(catalog_.sim);
}

const CameraModel& Simulator::camera(int view_id) const {
  if (view_id < 0 || view_id >= static_cast<int>(cameras_.size())) throw ConfigError("no such view");
  return cameras_[view_id];
}

TaskSpec Simulator::make_task(TaskFamily family, int placement_id, const std::string& target_item) const {
  const auto& f = catalog_.family(family);
  TaskSpec task;
  task.family = family;
  task.placement_id = placement_id;
  task.target_item = target_item.empty() ? f.targets.front() : target_item;
  task.target_zone = f.target_zone;
  validate_task(task);
  return task;
}

void Simulator::validate_task(const TaskSpec& task) const {
  const auto it = catalog_.families.find(task.family);
  if (it == catalog_.families.end()) throw InvalidTaskError("unknown family");
  const auto& f = it->second;
  if (task.placement_id < 0 || task.placement_id >= static_cast<int>(f.placements.size()))
    throw InvalidTaskError("placement_id " + std::to_string(task.placement_id) + " out of range for " +
                           std::string(to_string(task.family)));
  if (std::find(f.targets.begin(), f.targets.end(), task.target_item) == f.targets.end())
    throw InvalidTaskError("target '" + task.target_item + "' not valid for " + std::string(to_string(task.family)));
  if (task.prompt_box) validate_box(*task.prompt_box, catalog_.sim.image_width, catalog_.sim.image_height);
}

WorldState Simulator::reset(const TaskSpec& task, std::uint64_t seed) const {
  validate_task(task);
  const auto& f = catalog_.family(task.family);
  WorldState state;
  state.task = task;
  state.rng_seed = seed;
  const std::vector<std::string> scene =
      f.scene_items.empty() ? std::vector<std::string>{task.target_item} : f.scene_items;
  Rng rng(mix_seed({static_cast<std::uint64_t>(task.family), static_cast<std::uint64_t>(task.placement_id), seed}));
  const auto& slots = f.placements[task.placement_id];
  for (std::size_t i = 0; i < scene.size(); ++i) {
    PlacedItem item;
    item.spec = catalog_.item(scene[i]);
    item.pose = slots[i];
    if (f.jitter > 0.0) {
      item.pose.x += rng.uniform(-f.jitter, f.jitter);
      item.pose.y += rng.uniform(-f.jitter, f.jitter);
    }
    state.items.push_back(std::move(item));
  }
  state.gripper.position = catalog_.sim.home;
  state.gripper.width = catalog_.sim.width_max;
  state.gripper.commanded_width = catalog_.sim.width_max;
  return state;
}

WorldState Simulator::step(const WorldState& state, const ActionCommand& action) const {
  if (!action.finite()) throw InvalidActionError("action has non-finite components");
  const auto& cfg = catalog_.sim;
  WorldState next = state;
  auto& g = next.gripper;
  const double h = cfg.workspace_half;
  const ActionCommand target{clamp(action.x, -h, h), clamp(action.y, -h, h), clamp(action.z, 0.0, cfg.z_max),
                             clamp(action.width, 0.0, cfg.width_max)};

  const Vec3 before = g.position;
  g.position.x = approach(before.x, target.x, cfg.max_step);
  g.position.y = approach(before.y, target.y, cfg.max_step);
  g.position.z = approach(before.z, target.z, cfg.max_step);
  const double prev_width = g.width;
  g.width = approach(prev_width, target.width, cfg.width_rate);
  g.commanded_width = target.width;

  if (g.holding) {
    if (PlacedItem* held = next.find(*g.holding)) {
      held->pose.x = clamp(held->pose.x + (g.position.x - before.x), -h, h);
      held->pose.y = clamp(held->pose.y + (g.position.y - before.y), -h, h);
    }
    if (prev_width <= cfg.release_threshold && g.width > cfg.release_threshold) g.holding.reset();
  } else if (prev_width >= cfg.close_threshold && g.width < cfg.close_threshold) {
    GraspEvent event;
    event.step = next.step_count;
    event.gripper = g.position;
    event.commanded_width = g.commanded_width;
    // Several regions may contain the jaws; the nearest region center wins.
    double best = std::numeric_limits<double>::infinity();
    PlacedItem* grasped = nullptr;
    for (auto& item : next.items) {
      if (!grasp_success_predicate(next, item, cfg)) continue;
      const Vec2 c = grasp_region_world(item).center();
      const double d = std::hypot(c.x - g.position.x, c.y - g.position.y);
      if (d < best) {
        best = d;
        grasped = &item;
      }
    }
    if (grasped) {
      grasped->ever_grasped = true;
      g.holding = grasped->spec.item_id;
      event.item_id = grasped->spec.item_id;
      event.on_target = grasped->spec.item_id == next.task.target_item;
    }
    next.events.push_back(std::move(event));
  }
  ++next.step_count;
  return next;
}

bool Simulator::task_success(const WorldState& state) const {
  const PlacedItem* target = state.find(state.task.target_item);
  if (!target || !target->ever_grasped) return false;
  if (state.gripper.holding && *state.gripper.holding == target->spec.item_id) return false;
  return state.task.target_zone.contains(target->pose);
}

Image Simulator::render(const WorldState& state, const CameraModel& view) const {
  Image image(view.width, view.height);
  for (std::size_t i = 0; i < image.pixels.size(); i += 3) {
    image.pixels[i] = kBackground[0];
    image.pixels[i + 1] = kBackground[1];
    image.pixels[i + 2] = kBackground[2];
  }
  fill_rect(image, view, state.task.target_zone, kZone);
  const PlacedItem* held = nullptr;
  for (const auto& item : state.items) {
    if (state.gripper.holding && item.spec.item_id == *state.gripper.holding) {
      held = &item;
      continue;
    }
    draw_item(image, view, item);
  }
  if (held) draw_item(image, view, *held);
  // Two jaw marks straddling the gripper center along x.
  const auto& g = state.gripper;
  const double offset = g.width / 2.0 + 0.005;
  for (const double side : {-1.0, 1.0}) {
    const double jx = g.position.x + side * offset;
    fill_rect(image, view, {jx - 0.005, g.position.y - 0.015, jx + 0.005, g.position.y + 0.015}, kJaw);
  }
  return image;
}

std::vector<Image> Simulator::render_all(const WorldState& state) const {
  std::vector<Image> views;
  views.reserve(cameras_.size());
  for (const auto& cam : cameras_) views.push_back(render(state, cam));
  return views;
}

GraspBox Simulator::region_box(const PlacedItem& item, const CameraModel& view) const {
  const auto& r = item.spec.grasp_region;
  const Vec2 center = view.to_pixel({item.pose.x + r.offset_x, item.pose.y + r.offset_y});
  const auto& a = view.linear;
  GraspBox box;
  box.category = item.spec.category;
  box.cx = center.x;
  box.cy = center.y;
  box.w = std::abs(a[0]) * r.width + std::abs(a[1]) * r.height;
  box.h = std::abs(a[2]) * r.width + std::abs(a[3]) * r.height;
  box.confidence = 1.0;
  return box;
}

std::vector<GraspBox> Simulator::groundtruth_boxes(const WorldState& state, const CameraModel& view) const {
  std::vector<GraspBox> boxes;
  for (const auto& item : state.items)
    if (item.spec.graspable) boxes.push_back(region_box(item, view));
  return boxes;
}

}  // namespace graspdp
