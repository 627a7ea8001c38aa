#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "graspdp/core/types.hpp"
#include "graspdp/policy/diffusion.hpp"
#include "graspdp/policy/encoder.hpp"
#include "graspdp/policy/normalizer.hpp"

namespace graspdp {

inline constexpr std::uint32_t kPolicyFormatVersion = 1;

// One observation timestep as the policy sees it.
struct ObsStep {
  std::vector<Image> views;
  Vec3 eef;
  double gripper_width = 0.0;
  std::optional<GraspBox> box;  // conditioning box in view-0 pixels
};

// Batched, normalized policy inputs.
struct ObsBatch {
  torch::Tensor images;  // [B, T, V, 3, H, W] float in [0, 1]
  torch::Tensor lowdim;  // [B, T, 4]
  torch::Tensor box;     // [B, T, C + 5]
  ObsBatch to(torch::Dtype dtype) const { return {images.to(dtype), lowdim.to(dtype), box.to(dtype)}; }
  ObsBatch index(const torch::Tensor& rows) const {
    return {images.index_select(0, rows), lowdim.index_select(0, rows), box.index_select(0, rows)};
  }
};

using ActionChunk = std::array<ActionCommand, kChunkLength>;

// Inputs and reference output kept in every checkpoint; loading replays them
// and refuses a checkpoint whose forward pass no longer matches.
struct GoldenSet {
  ObsBatch obs;
  torch::Tensor x_t;  // [G, 16, 4]
  torch::Tensor t;    // [G]
  torch::Tensor eps_hat;
};

class Policy {
 public:
  Policy(const EncoderConfig& encoder, const DenoiserConfig& denoiser, const Normalizer& normalizer,
         std::uint64_t init_seed = 0);
  // Copies are deep: the copy owns its own weights.
  Policy(const Policy& other);
  Policy& operator=(const Policy& other);
  Policy(Policy&&) = default;
  Policy& operator=(Policy&&) = default;

  const EncoderConfig& encoder_config() const { return encoder_config_; }
  const DenoiserConfig& denoiser_config() const { return denoiser_config_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const Normalizer& normalizer() const { return normalizer_; }
  nlohmann::json& train_record() { return train_record_; }
  const nlohmann::json& train_record() const { return train_record_; }

  ObsEncoder& encoder() { return encoder_; }
  Denoiser& denoiser() { return denoiser_; }
  std::vector<torch::Tensor> parameters() const;
  // Name -> shape of every parameter, for architecture audits.
  std::vector<std::pair<std::string, std::vector<long>>> parameter_shapes() const;

  // histories[b] holds exactly `history` steps, oldest first.
  ObsBatch make_batch(const std::vector<std::vector<const ObsStep*>>& histories) const;
  torch::Tensor encode(const ObsBatch& batch);
  torch::Tensor predict_eps(const torch::Tensor& x_t, const torch::Tensor& t, const ObsBatch& batch);
  // Normalized chunks [B, 16, 4] via DDIM from per-row seeds.
  torch::Tensor sample(const ObsBatch& batch, const std::vector<std::uint64_t>& seeds);
  // Denormalized action chunks.
  std::vector<ActionChunk> act(const std::vector<std::vector<const ObsStep*>>& histories,
                               const std::vector<std::uint64_t>& seeds);

  void set_golden(const ObsBatch& obs, std::uint64_t seed);
  const std::optional<GoldenSet>& golden() const { return golden_; }
  // Max abs deviation of the current forward pass from the stored golden output.
  double golden_deviation();

  void copy_weights_from(const Policy& other);
  void to(torch::Dtype dtype);
  void set_training(bool on);

  void save(const std::filesystem::path& path) const;
  // Throws CheckpointError (corrupt/truncated or golden mismatch) and
  // VersionError (format version).
  static Policy load(const std::filesystem::path& path);

 private:
  EncoderConfig encoder_config_;
  DenoiserConfig denoiser_config_;
  NoiseSchedule schedule_;
  Normalizer normalizer_;
  nlohmann::json train_record_ = nlohmann::json::object();
  ObsEncoder encoder_{nullptr};
  Denoiser denoiser_{nullptr};
  std::optional<GoldenSet> golden_;
};

}  // namespace graspdp
