#pragma once

#include "graspdp/sim/simulator.hpp"

namespace graspdp {

struct ExpertConfig {
  double z_travel = 0.10;
  double z_low = 0.01;
  double tol_xy = 0.004;
  double tol_z = 0.004;
  double zone_tol = 0.01;
  double noise = 0.002;  // uniform waypoint noise bound
};

// Stateless waypoint controller: the phase is read off the world state.
// Approach above the target grasp region, descend, close to the region width,
// lift, carry over the target zone, open. Waypoint noise is a deterministic
// function of (rng_seed, step_count). Throws ExpertFailure when the target is
// missing, held by something else, or its grasp region lies outside the
// workspace.
ActionCommand scripted_expert(const Simulator& sim, const WorldState& state, const ExpertConfig& config = {});

}  // namespace graspdp
