#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. They deliberately avoid the library code paths they check.

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "graspdp/core/rng.hpp"
#include "graspdp/det/map.hpp"
#include "graspdp/sim/world.hpp"

namespace graspdp::oracle {

// Independent containment test: the point must be on the inner side of all
// four edges of the region polygon.
inline bool oracle_inside(Vec2 p, const PlacedItem& item) {
  const auto& r = item.spec.grasp_region;
  const double cx = item.pose.x + r.offset_x;
  const double cy = item.pose.y + r.offset_y;
  const Vec2 corners[4] = {{cx - r.width / 2, cy - r.height / 2},
                           {cx + r.width / 2, cy - r.height / 2},
                           {cx + r.width / 2, cy + r.height / 2},
                           {cx - r.width / 2, cy + r.height / 2}};
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = corners[i];
    const Vec2 b = corners[(i + 1) % 4];
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (cross < 0) return false;
  }
  return true;
}

// Recomputes greedy matching from scratch for every ranked prefix and
// integrates the interpolated precision over the distinct recall levels.
inline double brute_force_ap(const std::vector<std::vector<GraspBox>>& preds, const std::vector<std::vector<GraspBox>>& truth,
                      int cat) {
  struct Ref {
    double conf;
    std::size_t frame, index;
  };
  std::vector<Ref> ranked;
  int positives = 0;
  for (std::size_t f = 0; f < truth.size(); ++f) {
    for (const auto& t : truth[f]) positives += t.category == cat;
    for (std::size_t i = 0; i < preds[f].size(); ++i)
      if (preds[f][i].category == cat) ranked.push_back({preds[f][i].confidence, f, i});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ref& a, const Ref& b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.index < b.index;
  });
  std::vector<std::pair<double, double>> pr;  // (recall, precision)
  for (std::size_t k = 1; k <= ranked.size(); ++k) {
    std::set<std::pair<std::size_t, std::size_t>> taken;
    int tp = 0;
    for (std::size_t r = 0; r < k; ++r) {
      const GraspBox& p = preds[ranked[r].frame][ranked[r].index];
      double best = -1;
      std::size_t best_g = 0;
      for (std::size_t g = 0; g < truth[ranked[r].frame].size(); ++g) {
        const GraspBox& t = truth[ranked[r].frame][g];
        if (t.category != cat || taken.count({ranked[r].frame, g})) continue;
        const double o = iou(p, t);
        if (o >= 0.5 && o > best) {
          best = o;
          best_g = g;
        }
      }
      if (best >= 0) {
        taken.insert({ranked[r].frame, best_g});
        ++tp;
      }
    }
    pr.push_back({static_cast<double>(tp) / positives, static_cast<double>(tp) / k});
  }
  std::set<double> levels;
  for (const auto& [r, p] : pr) levels.insert(r);
  double ap = 0, prev = 0;
  for (double r : levels) {
    double best_p = 0;
    for (const auto& [rr, pp] : pr)
      if (rr >= r) best_p = std::max(best_p, pp);
    ap += (r - prev) * best_p;
    prev = r;
  }
  return ap;
}

struct MapCase {
  std::vector<std::vector<GraspBox>> preds, truth;
};

inline MapCase random_case(Rng& rng) {
  MapCase c;
  const int frames = 1 + static_cast<int>(rng.below(4));
  for (int f = 0; f < frames; ++f) {
    std::vector<GraspBox> t, p;
    const int nt = static_cast<int>(rng.below(4));
    for (int i = 0; i < nt; ++i) {
      const GraspBox g{1 + static_cast<int>(rng.below(3)), rng.uniform(5, 90), rng.uniform(5, 90), rng.uniform(4, 10),
                       rng.uniform(4, 10), 1.0};
      t.push_back(g);
      // Near-duplicates, loose matches and wrong labels.
      const int copies = static_cast<int>(rng.below(3));
      for (int k = 0; k < copies; ++k) {
        GraspBox q = g;
        q.cx += rng.uniform(-3, 3);
        q.cy += rng.uniform(-3, 3);
        if (rng.uniform() < 0.2) q.category = 1 + static_cast<int>(rng.below(3));
        q.confidence = 0.1 * static_cast<double>(1 + rng.below(9));  // coarse, so ties occur
        p.push_back(q);
      }
    }
    const int junk = static_cast<int>(rng.below(3));
    for (int k = 0; k < junk; ++k)
      p.push_back({1 + static_cast<int>(rng.below(3)), rng.uniform(5, 90), rng.uniform(5, 90), 6, 6,
                   0.1 * static_cast<double>(1 + rng.below(9))});
    c.truth.push_back(t);
    c.preds.push_back(p);
  }
  return c;
}

}  // namespace graspdp::oracle
