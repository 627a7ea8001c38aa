#pragma once

#include <optional>
#include <string>
#include <vector>

#include "graspdp/demo/episode.hpp"

namespace graspdp {

struct Counts {
  long episodes = 0;
  long task_successes = 0;
  long grasp_attempts = 0;
  long grasp_successes = 0;

  // 0 when there are no episodes.
  double tsr() const { return episodes ? static_cast<double>(task_successes) / episodes : 0.0; }
  // Undefined (nullopt) when nothing was attempted; never reported as 0.
  std::optional<double> gsr() const {
    if (grasp_attempts == 0) return std::nullopt;
    return static_cast<double>(grasp_successes) / grasp_attempts;
  }
  Counts& operator+=(const Counts& o);
  friend bool operator==(const Counts&, const Counts&) = default;
};

Counts counts_of(const EpisodeRecord& record);

struct ConditionKey {
  TaskFamily family = TaskFamily::kPickBig;
  std::string target_item;
  int placement_id = 0;
  friend bool operator==(const ConditionKey&, const ConditionKey&) = default;
};

struct ConditionMetrics {
  ConditionKey key;
  Counts counts;
};

struct MetricsReport {
  std::vector<ConditionMetrics> conditions;  // first-appearance order
  Counts total;  // pooled; zero-attempt conditions add nothing to GSR
  // Unweighted means over conditions; the GSR mean skips undefined ones.
  double mean_tsr = 0.0;
  std::optional<double> mean_gsr;
  int gsr_undefined = 0;  // conditions without a single grasp attempt
};

MetricsReport compute_metrics(const std::vector<EpisodeRecord>& records);

}  // namespace graspdp
