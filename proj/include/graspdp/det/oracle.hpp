#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graspdp/core/types.hpp"
#include "graspdp/demo/episode.hpp"

namespace graspdp {

enum class ConfidenceModel { kExponential, kConstant };

struct CorruptionConfig {
  double center_sigma = 0.0;  // px, per axis
  double size_sigma = 0.0;    // px, on w and h
  double dropout_prob = 0.0;
  ConfidenceModel confidence_model = ConfidenceModel::kExponential;
  double tau = 8.0;  // px; conf = exp(-(|dc| + |ds|) / tau)
  friend bool operator==(const CorruptionConfig&, const CorruptionConfig&) = default;
};

std::string to_string(ConfidenceModel m);
ConfidenceModel parse_confidence_model(const std::string& s);

// Ground-truth boxes of `frame` with independent dropout and Gaussian jitter.
// Output boxes are clamped to the W x H image. Throws ConfigError on negative
// sigmas, tau <= 0 or a dropout probability outside [0, 1].
std::vector<GraspBox> oracle_detect(const std::vector<GraspBox>& truth, const CorruptionConfig& corruption,
                                    std::uint64_t seed, int width = 96, int height = 96);
std::vector<GraspBox> oracle_detect(const ObservationFrame& frame, const CorruptionConfig& corruption,
                                    std::uint64_t seed, int width = 96, int height = 96);

// Highest confidence; ties go to the lower category, then smaller cx, then
// smaller cy.
std::optional<GraspBox> select_top(const std::vector<GraspBox>& boxes);

// Pulls a box back inside the image: center in [0, W) x [0, H), sizes at
// least `min_size` and at most the image extent, confidence in [0, 1].
GraspBox clamp_box(GraspBox box, int width, int height, double min_size = 1e-3);

}  // namespace graspdp
