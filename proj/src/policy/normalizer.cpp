#include "graspdp/policy/normalizer.hpp"

#include <algorithm>
#include <limits>

#include "graspdp/core/errors.hpp"

namespace graspdp {

namespace {
constexpr double kMinRange = 1e-9;
}

RangeNormalizer RangeNormalizer::fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ConfigError("cannot fit a normalizer on zero rows");
  RangeNormalizer n;
  const std::size_t d = rows.front().size();
  n.lo.assign(d, std::numeric_limits<double>::infinity());
  n.hi.assign(d, -std::numeric_limits<double>::infinity());
  for (const auto& r : rows) {
    if (r.size() != d) throw ShapeError("normalizer rows have inconsistent widths");
    for (std::size_t i = 0; i < d; ++i) {
      n.lo[i] = std::min(n.lo[i], r[i]);
      n.hi[i] = std::max(n.hi[i], r[i]);
    }
  }
  n.degenerate.resize(d);
  for (std::size_t i = 0; i < d; ++i) n.degenerate[i] = n.hi[i] - n.lo[i] < kMinRange;
  return n;
}

double RangeNormalizer::normalize(std::size_t i, double x) const {
  if (degenerate.at(i)) return x;
  return 2.0 * (x - lo[i]) / (hi[i] - lo[i]) - 1.0;
}

double RangeNormalizer::denormalize(std::size_t i, double y) const {
  if (degenerate.at(i)) return y;
  return (y + 1.0) / 2.0 * (hi[i] - lo[i]) + lo[i];
}

std::vector<double> RangeNormalizer::normalize(const std::vector<double>& x) const {
  if (x.size() != dims()) throw ShapeError("normalizer dimension mismatch");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = normalize(i, x[i]);
  return y;
}

std::vector<double> RangeNormalizer::denormalize(const std::vector<double>& y) const {
  if (y.size() != dims()) throw ShapeError("normalizer dimension mismatch");
  std::vector<double> x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) x[i] = denormalize(i, y[i]);
  return x;
}

nlohmann::json to_json(const RangeNormalizer& n) {
  return {{"min", n.lo}, {"max", n.hi}, {"degenerate", n.degenerate}};
}

RangeNormalizer range_normalizer_from_json(const nlohmann::json& j) {
  RangeNormalizer n;
  n.lo = j.at("min").get<std::vector<double>>();
  n.hi = j.at("max").get<std::vector<double>>();
  n.degenerate = j.at("degenerate").get<std::vector<bool>>();
  if (n.hi.size() != n.lo.size() || n.degenerate.size() != n.lo.size())
    throw ShapeError("normalizer fields have different lengths");
  return n;
}

nlohmann::json to_json(const Normalizer& n) { return {{"action", to_json(n.action)}, {"lowdim", to_json(n.lowdim)}}; }

Normalizer normalizer_from_json(const nlohmann::json& j) {
  return {range_normalizer_from_json(j.at("action")), range_normalizer_from_json(j.at("lowdim"))};
}

}  // namespace graspdp
