#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace graspdp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

// Axis-aligned graspable region in image pixels. Rotation is intentionally
// absent: the arm cannot rotate, so boxes stay axis-aligned.
struct GraspBox {
  int category = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double confidence = 1.0;
  friend bool operator==(const GraspBox&, const GraspBox&) = default;
};

// Throws ValidationError naming the first field that violates the box
// invariants for a W x H image.
void validate_box(const GraspBox& box, int width, int height);

// Absolute end-effector target plus jaw opening, all in meters.
struct ActionCommand {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double width = 0.0;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) &&
           std::isfinite(width);
  }
  friend bool operator==(const ActionCommand&, const ActionCommand&) = default;
};

// Row-major HWC RGB image, 8 bits per channel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace graspdp
