#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace graspdp {

inline constexpr int kChunkLength = 16;
inline constexpr int kActionDim = 4;

// Squared-cosine schedule: alphabar(t) = f((t + 1) / T) / f(0) with
// f(u) = cos^2(((u + s) / (1 + s)) * pi / 2); betas clipped to 0.999.
struct NoiseSchedule {
  int steps = 0;
  double offset = 0.008;
  std::vector<double> betas, alphas, alphabar;
};

NoiseSchedule make_schedule(int steps, double offset = 0.008);

// sqrt(ab[t]) x0 + sqrt(1 - ab[t]) eps with x0, eps [B, L, A] and t [B].
torch::Tensor q_sample(const NoiseSchedule& schedule, const torch::Tensor& x0, const torch::Tensor& t,
                       const torch::Tensor& eps);

struct DenoiserConfig {
  int token_dim = 128;
  int depth = 4;
  int heads = 4;
  int ffn_mult = 4;
  int train_steps = 100;
  int inference_steps = 16;
  double eta = 0.0;
  bool clip_sample = true;  // clip the x0 estimate to [-1, 1] during DDIM
  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

// Sinusoidal features of integer timesteps [B] -> [B, dim].
torch::Tensor timestep_features(const torch::Tensor& t, int dim);

// Epsilon predictor: action rows projected to d, plus learned positions and a
// timestep embedding; cross-attention keys/values are [time token, obs tokens].
class DenoiserImpl : public torch::nn::Module {
 public:
  explicit DenoiserImpl(const DenoiserConfig& c);
  const DenoiserConfig& config() const { return config_; }
  // x_t [B, 16, 4], t [B] (int64), obs [B, T_o, d] -> eps_hat [B, 16, 4]
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& obs);

 private:
  DenoiserConfig config_;
  torch::nn::Linear action_in_{nullptr}, time1_{nullptr}, time2_{nullptr}, action_out_{nullptr};
  torch::Tensor pos_;
  torch::nn::ModuleList blocks_{nullptr};
  torch::nn::LayerNorm norm_{nullptr};
};
TORCH_MODULE(Denoiser);

// Descending, evenly spread subsequence of S timesteps from [0, T).
std::vector<int> ddim_timesteps(int train_steps, int inference_steps);

// Unit-Gaussian chunk per seed, [B, 16, 4].
torch::Tensor initial_noise(const std::vector<std::uint64_t>& seeds, torch::Dtype dtype = torch::kFloat32);

// DDIM from seeded noise. With eta = 0 the result is a pure function of
// (parameters, obs, seeds). Throws ConfigError when S > T.
torch::Tensor ddim_sample(Denoiser& denoiser, const torch::Tensor& obs, const NoiseSchedule& schedule,
                          int inference_steps, double eta, const std::vector<std::uint64_t>& seeds, bool clip_sample);

// Generic form driven by any epsilon predictor (used with analytic oracles).
torch::Tensor ddim_sample_fn(const std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>& predict_eps,
                          const torch::Tensor& x_init, const NoiseSchedule& schedule, int inference_steps, double eta,
                          const std::vector<std::uint64_t>& seeds, bool clip_sample);

// MSE(eps_hat(q_sample(x0, t, eps), t, obs), eps) for given t and eps.
torch::Tensor diffusion_loss(Denoiser& denoiser, const NoiseSchedule& schedule, const torch::Tensor& x0,
                             const torch::Tensor& obs, const torch::Tensor& t, const torch::Tensor& eps);
// Same with t ~ U{0..T-1} and eps ~ N(0, I) drawn from `gen`.
torch::Tensor diffusion_loss(Denoiser& denoiser, const NoiseSchedule& schedule, const torch::Tensor& x0,
                             const torch::Tensor& obs, at::Generator& gen);

}  // namespace graspdp
