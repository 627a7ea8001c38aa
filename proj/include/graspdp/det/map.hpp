#pragma once

#include <map>
#include <vector>

#include "graspdp/core/types.hpp"

namespace graspdp {

double iou(const GraspBox& a, const GraspBox& b);

struct MapResult {
  double map = 0.0;
  std::map<int, double> per_category;  // categories present in the ground truth
};

// PASCAL-style all-point AP per category at an IoU threshold, averaged over
// the categories that occur in the ground truth. predictions[i] and truth[i]
// describe the same frame. Detections are ranked by confidence (ties keep
// frame order, then list order) and greedily matched to the unmatched
// ground-truth box of highest IoU. Throws ShapeError on an empty or
// mismatched test set.
MapResult mean_average_precision(const std::vector<std::vector<GraspBox>>& predictions,
                                 const std::vector<std::vector<GraspBox>>& truth, double iou_threshold = 0.5);

}  // namespace graspdp
