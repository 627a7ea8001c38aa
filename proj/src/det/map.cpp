#include "graspdp/det/map.hpp"

#include <algorithm>
#include <set>

#include "graspdp/core/errors.hpp"

namespace graspdp {

double iou(const GraspBox& a, const GraspBox& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

MapResult mean_average_precision(const std::vector<std::vector<GraspBox>>& predictions,
                                 const std::vector<std::vector<GraspBox>>& truth, double iou_threshold) {
  if (truth.empty()) throw ShapeError("mAP needs a non-empty test set");
  if (predictions.size() != truth.size()) throw ShapeError("predictions and ground truth cover different frames");

  std::set<int> categories;
  for (const auto& frame : truth)
    for (const auto& b : frame) categories.insert(b.category);

  MapResult result;
  for (int cat : categories) {
    struct Det {
      double conf;
      std::size_t frame;
      std::size_t index;
    };
    std::vector<Det> dets;
    int positives = 0;
    std::vector<std::vector<bool>> used(truth.size());
    for (std::size_t f = 0; f < truth.size(); ++f) {
      used[f].assign(truth[f].size(), false);
      for (const auto& b : truth[f]) positives += b.category == cat;
      for (std::size_t i = 0; i < predictions[f].size(); ++i)
        if (predictions[f][i].category == cat) dets.push_back({predictions[f][i].confidence, f, i});
    }
    std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) { return a.conf > b.conf; });

    std::vector<double> precision, recall;
    int tp = 0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const auto& d = dets[k];
      const GraspBox& p = predictions[d.frame][d.index];
      double best = iou_threshold;
      int match = -1;
      for (std::size_t g = 0; g < truth[d.frame].size(); ++g) {
        const GraspBox& t = truth[d.frame][g];
        if (t.category != cat || used[d.frame][g]) continue;
        const double o = iou(p, t);
        if (o >= best) {
          best = o;
          match = static_cast<int>(g);
        }
      }
      if (match >= 0) {
        used[d.frame][match] = true;
        ++tp;
      }
      precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
      recall.push_back(static_cast<double>(tp) / positives);
    }
    // Precision envelope from the right, then area under the step curve.
    for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < precision.size(); ++k) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
    result.per_category[cat] = ap;
    result.map += ap;
  }
  result.map /= static_cast<double>(std::max<std::size_t>(categories.size(), 1));
  return result;
}

}  // namespace graspdp
