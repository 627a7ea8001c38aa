#include "graspdp/eval/metrics.hpp"

namespace graspdp {

Counts& Counts::operator+=(const Counts& o) {
  episodes += o.episodes;
  task_successes += o.task_successes;
  grasp_attempts += o.grasp_attempts;
  grasp_successes += o.grasp_successes;
  return *this;
}

Counts counts_of(const EpisodeRecord& r) {
  return {1, r.outcome.task_success ? 1 : 0, r.outcome.grasp_attempts, r.outcome.grasp_successes};
}

MetricsReport compute_metrics(const std::vector<EpisodeRecord>& records) {
  MetricsReport m;
  for (const auto& r : records) {
    const ConditionKey key{r.task.family, r.task.target_item, r.task.placement_id};
    auto it = std::find_if(m.conditions.begin(), m.conditions.end(), [&](const auto& c) { return c.key == key; });
    if (it == m.conditions.end()) {
      m.conditions.push_back({key, {}});
      it = std::prev(m.conditions.end());
    }
    it->counts += counts_of(r);
    m.total += counts_of(r);
  }
  double tsr_sum = 0.0, gsr_sum = 0.0;
  int gsr_n = 0;
  for (const auto& c : m.conditions) {
    tsr_sum += c.counts.tsr();
    if (const auto g = c.counts.gsr()) {
      gsr_sum += *g;
      ++gsr_n;
    } else {
      ++m.gsr_undefined;
    }
  }
  if (!m.conditions.empty()) m.mean_tsr = tsr_sum / m.conditions.size();
  if (gsr_n) m.mean_gsr = gsr_sum / gsr_n;
  return m;
}

}  // namespace graspdp
