#include "graspdp/core/types.hpp"

#include <cmath>
#include <string>

#include "graspdp/core/errors.hpp"

namespace graspdp {

void validate_box(const GraspBox& box, int width, int height) {
  auto fail = [](const char* field, const std::string& why) {
    throw ValidationError(field, std::string(field) + ": " + why);
  };
  if (!std::isfinite(box.cx) || box.cx < 0.0 || box.cx >= width)
    fail("cx", "must lie in [0, " + std::to_string(width) + ")");
  if (!std::isfinite(box.cy) || box.cy < 0.0 || box.cy >= height)
    fail("cy", "must lie in [0, " + std::to_string(height) + ")");
  if (!std::isfinite(box.w) || box.w <= 0.0) fail("w", "must be positive");
  if (!std::isfinite(box.h) || box.h <= 0.0) fail("h", "must be positive");
  if (!std::isfinite(box.confidence) || box.confidence < 0.0 || box.confidence > 1.0)
    fail("confidence", "must lie in [0, 1]");
  if (box.category < 0) fail("category", "must be non-negative");
}

}  // namespace graspdp
