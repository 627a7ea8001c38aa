#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspdp/demo/dataset.hpp"
#include "graspdp/policy/policy.hpp"
#include "graspdp/sim/simulator.hpp"

namespace graspdp {

struct TrainConfig {
  std::uint64_t seed = 0;
  int batch_size = 64;
  int steps = 3000;
  double lr = 1e-4;
  double lr_final_ratio = 0.0;  // cosine decay ends at lr * ratio
  int warmup_steps = 0;
  double weight_decay = 1e-6;
  bool ema = true;
  double ema_decay = 0.999;
  bool box_conditioning = true;
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  int checkpoint_every = 0;  // 0: final checkpoint only
  int log_every = 1;
  int golden_windows = 4;
  EncoderConfig encoder;
  DenoiserConfig denoiser;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
std::string arm_name(bool box_conditioning);  // "boxcond" / "baseline"

// A training sample: frames [history] of one episode and the 16 action
// indices it should predict (clamped at the episode tail).
struct WindowIndex {
  int episode = 0;
  int t = 0;
  std::array<int, 2> history{};
  std::array<int, kChunkLength> target{};
  friend bool operator==(const WindowIndex&, const WindowIndex&) = default;
};

// One window per frame, stride 1. Throws ConfigError when there is nothing
// to draw windows from.
std::vector<WindowIndex> make_windows(const std::vector<int>& episode_lengths);

// Box the policy is conditioned on for a recorded frame: the task prompt in
// prompted families, otherwise the most confident stored box.
std::optional<GraspBox> conditioning_box(const EpisodeRecord& episode, const ObservationFrame& frame);

ObsStep obs_step(const ObservationFrame& frame, std::optional<GraspBox> box);

// Episodes of a manifest. Views are rendered from the stored scene snapshots,
// either once up front (cache_views) or on demand for every batch.
class WindowDataset {
 public:
  WindowDataset(const Simulator& sim, const DatasetManifest& manifest, bool cache_views = true);
  WindowDataset(const Simulator& sim, std::vector<EpisodeRecord> episodes, bool cache_views = true);

  const std::vector<EpisodeRecord>& episodes() const { return episodes_; }
  const std::vector<WindowIndex>& windows() const { return windows_; }
  Normalizer fit_normalizer() const;

  // Histories (with views) for the given windows.
  std::vector<std::vector<ObsStep>> histories(const std::vector<std::size_t>& window_ids) const;
  // Normalized targets [B, 16, 4].
  torch::Tensor targets(const std::vector<std::size_t>& window_ids, const Normalizer& n) const;
  ObsBatch batch(const Policy& policy, const std::vector<std::size_t>& window_ids) const;

 private:
  void index(bool cache_views);
  const Simulator& sim_;
  std::vector<EpisodeRecord> episodes_;
  std::vector<WindowIndex> windows_;
};

struct TrainResult {
  Policy policy;  // EMA weights when enabled
  std::vector<double> losses;
  std::filesystem::path checkpoint;  // empty when out_dir is empty
};

struct TrainHooks {
  // Called before every optimization step; tests use it to inject faults.
  std::function<void(int step, Policy& policy)> before_step;
};

TrainResult train_policy(const Simulator& sim, const TrainConfig& config, const TrainHooks& hooks = {});
TrainResult train_policy(const Simulator& sim, const TrainConfig& config, const WindowDataset& data,
                         const TrainHooks& hooks = {});

}  // namespace graspdp
