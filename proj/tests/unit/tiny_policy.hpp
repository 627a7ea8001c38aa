#pragma once

#include "graspdp/policy/policy.hpp"
#include "graspdp/sim/simulator.hpp"

namespace graspdp {

// Untrained, small enough for fast rollouts.
inline Policy tiny_policy(const Simulator& sim, std::uint64_t seed, bool box_conditioning = true) {
  EncoderConfig e;
  e.view_count = sim.config().view_count;
  e.image_width = sim.config().image_width;
  e.image_height = sim.config().image_height;
  e.category_count = sim.catalog().category_count;
  e.stem_channels = 4;
  e.stage_channels = {8};
  e.token_dim = 16;
  e.attn_layers = 1;
  e.attn_heads = 2;
  e.box_conditioning = box_conditioning;
  DenoiserConfig d;
  d.token_dim = 16;
  d.depth = 1;
  d.heads = 2;
  d.train_steps = 20;
  d.inference_steps = 3;
  Normalizer n;
  const double h = sim.config().workspace_half;
  n.action = RangeNormalizer::fit({{-h, -h, 0.0, 0.0}, {h, h, 0.2, 0.1}});
  n.lowdim = n.action;
  return Policy(e, d, n, seed);
}

}  // namespace graspdp
