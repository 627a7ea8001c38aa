#include "graspdp/demo/expert.hpp"

#include <cmath>

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"

namespace graspdp {

ActionCommand scripted_expert(const Simulator& sim, const WorldState& state, const ExpertConfig& config) {
  const auto& cfg = sim.config();
  const auto& g = state.gripper;
  const PlacedItem* target = state.find(state.task.target_item);
  if (!target) throw ExpertFailure("target '" + state.task.target_item + "' is not in the scene");

  const Vec2 grasp = grasp_region_world(*target).center();
  if (std::abs(grasp.x) > cfg.workspace_half || std::abs(grasp.y) > cfg.workspace_half)
    throw ExpertFailure("target grasp region is outside the workspace");
  const double g_width = target->spec.grasp_region.width;

  Rng rng(mix_seed({state.rng_seed, static_cast<std::uint64_t>(state.step_count), 0x657870ULL}));
  auto noisy = [&](double x, double y, double z, double width) {
    return ActionCommand{x + rng.uniform(-config.noise, config.noise), y + rng.uniform(-config.noise, config.noise),
                         z + rng.uniform(-config.noise, config.noise), width};
  };
  const Vec3& p = g.position;

  if (g.holding) {
    if (*g.holding != target->spec.item_id) return {p.x, p.y, p.z, cfg.width_max};  // drop the wrong item
    const Vec2 zone = state.task.target_zone.center();
    const double dist = std::hypot(zone.x - p.x, zone.y - p.y);
    if (dist > config.zone_tol) {
      if (p.z < config.z_travel - config.tol_z) return noisy(p.x, p.y, config.z_travel, g_width);
      return noisy(zone.x, zone.y, config.z_travel, g_width);
    }
    return noisy(zone.x, zone.y, config.z_travel, cfg.width_max);
  }

  // Closed on nothing (a missed attempt): reopen in place before retrying.
  if (g.width < cfg.close_threshold) return {p.x, p.y, p.z, cfg.width_max};

  const double dist = std::hypot(grasp.x - p.x, grasp.y - p.y);
  if (dist > config.tol_xy) return noisy(grasp.x, grasp.y, config.z_travel, cfg.width_max);
  if (p.z > config.z_low + config.tol_z) return noisy(grasp.x, grasp.y, config.z_low, cfg.width_max);
  return noisy(grasp.x, grasp.y, config.z_low, g_width);
}

}  // namespace graspdp
