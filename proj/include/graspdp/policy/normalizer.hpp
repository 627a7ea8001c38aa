#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "graspdp/core/types.hpp"

namespace graspdp {

// Per-dimension min/max map onto [-1, 1]. Dimensions whose range is
// (numerically) zero pass through unchanged and are flagged.
struct RangeNormalizer {
  std::vector<double> lo, hi;
  std::vector<bool> degenerate;

  static RangeNormalizer fit(const std::vector<std::vector<double>>& rows);
  std::size_t dims() const { return lo.size(); }
  double normalize(std::size_t dim, double x) const;
  double denormalize(std::size_t dim, double y) const;
  std::vector<double> normalize(const std::vector<double>& x) const;
  std::vector<double> denormalize(const std::vector<double>& y) const;
  friend bool operator==(const RangeNormalizer&, const RangeNormalizer&) = default;
};

struct Normalizer {
  RangeNormalizer action;  // (x, y, z, width)
  RangeNormalizer lowdim;  // (eef x, y, z, gripper width)
  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

inline std::vector<double> action_vec(const ActionCommand& a) { return {a.x, a.y, a.z, a.width}; }
inline ActionCommand action_from(const std::vector<double>& v) { return {v.at(0), v.at(1), v.at(2), v.at(3)}; }

nlohmann::json to_json(const RangeNormalizer& n);
RangeNormalizer range_normalizer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Normalizer& n);
Normalizer normalizer_from_json(const nlohmann::json& j);

}  // namespace graspdp
