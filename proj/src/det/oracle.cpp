#include "graspdp/det/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"

namespace graspdp {

std::string to_string(ConfidenceModel m) { return m == ConfidenceModel::kConstant ? "constant" : "exponential"; }

ConfidenceModel parse_confidence_model(const std::string& s) {
  if (s == "exponential") return ConfidenceModel::kExponential;
  if (s == "constant") return ConfidenceModel::kConstant;
  throw ConfigError("unknown confidence model '" + s + "'");
}

GraspBox clamp_box(GraspBox box, int width, int height, double min_size) {
  const double max_x = std::nextafter(static_cast<double>(width), 0.0);
  const double max_y = std::nextafter(static_cast<double>(height), 0.0);
  box.cx = std::clamp(box.cx, 0.0, max_x);
  box.cy = std::clamp(box.cy, 0.0, max_y);
  box.w = std::clamp(box.w, min_size, static_cast<double>(width));
  box.h = std::clamp(box.h, min_size, static_cast<double>(height));
  box.confidence = std::clamp(box.confidence, 0.0, 1.0);
  return box;
}

std::vector<GraspBox> oracle_detect(const std::vector<GraspBox>& truth, const CorruptionConfig& c, std::uint64_t seed,
                                    int width, int height) {
  if (c.center_sigma < 0) throw ConfigError("center_sigma must be non-negative");
  if (c.size_sigma < 0) throw ConfigError("size_sigma must be non-negative");
  if (!(c.dropout_prob >= 0 && c.dropout_prob <= 1)) throw ConfigError("dropout_prob must lie in [0, 1]");
  if (!(c.tau > 0)) throw ConfigError("tau must be positive");
  std::vector<GraspBox> out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    // Per-box streams keep each box's noise independent of the others.
    Rng rng(mix_seed({seed, i, 0x6f7261636c65ULL}));
    if (rng.uniform() < c.dropout_prob) continue;
    GraspBox b = truth[i];
    const double dx = c.center_sigma * rng.normal();
    const double dy = c.center_sigma * rng.normal();
    const double dw = c.size_sigma * rng.normal();
    const double dh = c.size_sigma * rng.normal();
    b.cx += dx;
    b.cy += dy;
    b.w += dw;
    b.h += dh;
    b.confidence = c.confidence_model == ConfidenceModel::kConstant
                       ? 1.0
                       : std::exp(-(std::hypot(dx, dy) + std::hypot(dw, dh)) / c.tau);
    out.push_back(clamp_box(b, width, height));
  }
  return out;
}

std::vector<GraspBox> oracle_detect(const ObservationFrame& frame, const CorruptionConfig& corruption,
                                    std::uint64_t seed, int width, int height) {
  return oracle_detect(frame.boxes, corruption, seed, width, height);
}

std::optional<GraspBox> select_top(const std::vector<GraspBox>& boxes) {
  if (boxes.empty()) return std::nullopt;
  auto key = [](const GraspBox& b) { return std::make_tuple(-b.confidence, b.category, b.cx, b.cy); };
  return *std::min_element(boxes.begin(), boxes.end(),
                           [&](const GraspBox& a, const GraspBox& b) { return key(a) < key(b); });
}

}  // namespace graspdp
