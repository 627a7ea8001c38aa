#include "graspdp/policy/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"
#include "graspdp/policy/layers.hpp"

namespace graspdp {

NoiseSchedule make_schedule(int steps, double offset) {
  if (steps < 2) throw ConfigError("a noise schedule needs at least 2 steps");
  NoiseSchedule s;
  s.steps = steps;
  s.offset = offset;
  auto f = [&](double u) {
    const double c = std::cos((u + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  double prev = 1.0;  // alphabar before the first step
  double product = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double target = f((t + 1.0) / steps) / f(0.0);
    const double beta = std::min(1.0 - target / prev, 0.999);
    s.betas.push_back(beta);
    s.alphas.push_back(1.0 - beta);
    product *= 1.0 - beta;
    s.alphabar.push_back(product);
    prev = target;
  }
  return s;
}

namespace {

torch::Tensor gather_alphabar(const NoiseSchedule& s, const torch::Tensor& t, const torch::Tensor& like) {
  const auto table = torch::tensor(s.alphabar, torch::kFloat64).to(like.scalar_type());
  return table.index_select(0, t.to(torch::kLong)).view({-1, 1, 1});
}

void check_chunk(const torch::Tensor& x, const char* name) {
  if (x.dim() != 3 || x.size(1) != kChunkLength || x.size(2) != kActionDim)
    throw ShapeError(std::string(name) + " must be [B, 16, 4]");
}

}  // namespace

torch::Tensor q_sample(const NoiseSchedule& schedule, const torch::Tensor& x0, const torch::Tensor& t,
                       const torch::Tensor& eps) {
  check_chunk(x0, "x0");
  if (!eps.sizes().equals(x0.sizes())) throw ShapeError("eps must match x0");
  if (t.dim() != 1 || t.size(0) != x0.size(0)) throw ShapeError("t must be [B]");
  if (t.min().item<long>() < 0 || t.max().item<long>() >= schedule.steps) throw ShapeError("t out of range");
  const auto ab = gather_alphabar(schedule, t, x0);
  return ab.sqrt() * x0 + (1 - ab).sqrt() * eps;
}

nlohmann::json to_json(const DenoiserConfig& c) {
  return {{"token_dim", c.token_dim},     {"depth", c.depth},
          {"heads", c.heads},             {"ffn_mult", c.ffn_mult},
          {"train_steps", c.train_steps}, {"inference_steps", c.inference_steps},
          {"eta", c.eta},                 {"clip_sample", c.clip_sample}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.token_dim = j.value("token_dim", c.token_dim);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.train_steps = j.value("train_steps", c.train_steps);
  c.inference_steps = j.value("inference_steps", c.inference_steps);
  c.eta = j.value("eta", c.eta);
  c.clip_sample = j.value("clip_sample", c.clip_sample);
  if (c.inference_steps < 1 || c.inference_steps > c.train_steps)
    throw ConfigError("inference_steps must lie in [1, train_steps]");
  if (c.eta < 0) throw ConfigError("eta must be non-negative");
  return c;
}

torch::Tensor timestep_features(const torch::Tensor& t, int dim) {
  const int half = dim / 2;
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, opts) / half);
  const auto args = t.to(torch::kFloat64).unsqueeze(1) * freqs.unsqueeze(0);
  auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
  if (dim % 2) emb = torch::cat({emb, torch::zeros({t.size(0), 1}, opts)}, 1);
  return emb;
}

DenoiserImpl::DenoiserImpl(const DenoiserConfig& c) : config_(c) {
  const int d = c.token_dim;
  action_in_ = register_module("action_in", torch::nn::Linear(kActionDim, d));
  pos_ = register_parameter("pos", torch::randn({kChunkLength, d}) * 0.02);
  time1_ = register_module("time1", torch::nn::Linear(d, d));
  time2_ = register_module("time2", torch::nn::Linear(d, d));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < c.depth; ++i) blocks_->push_back(CrossAttentionBlock(d, c.heads, c.ffn_mult));
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  action_out_ = register_module("action_out", torch::nn::Linear(d, kActionDim));
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& obs) {
  check_chunk(x_t, "x_t");
  if (obs.dim() != 3 || obs.size(2) != config_.token_dim || obs.size(0) != x_t.size(0))
    throw ShapeError("observation tokens must be [B, T_o, " + std::to_string(config_.token_dim) + "]");
  const auto temb = time2_(torch::silu(time1_(timestep_features(t, config_.token_dim).to(x_t.scalar_type()))));
  auto x = action_in_(x_t) + pos_.unsqueeze(0) + temb.unsqueeze(1);
  const auto memory = torch::cat({temb.unsqueeze(1), obs}, 1);
  for (const auto& block : *blocks_) x = block->as<CrossAttentionBlockImpl>()->forward(x, memory);
  return action_out_(norm_(x));
}

std::vector<int> ddim_timesteps(int train_steps, int inference_steps) {
  if (inference_steps < 1 || inference_steps > train_steps)
    throw ConfigError("DDIM steps must lie in [1, " + std::to_string(train_steps) + "]");
  std::vector<int> ts;
  if (inference_steps == 1) return {train_steps - 1};
  for (int i = inference_steps - 1; i >= 0; --i)
    ts.push_back(static_cast<int>(std::lround(static_cast<double>(i) * (train_steps - 1) / (inference_steps - 1))));
  return ts;
}

torch::Tensor initial_noise(const std::vector<std::uint64_t>& seeds, torch::Dtype dtype) {
  auto out = torch::empty({static_cast<long>(seeds.size()), kChunkLength, kActionDim}, torch::kFloat64);
  auto* p = out.data_ptr<double>();
  for (std::uint64_t seed : seeds) {
    Rng rng(mix_seed({seed, 0x6e6f697365ULL}));
    for (int i = 0; i < kChunkLength * kActionDim; ++i) *p++ = rng.normal();
  }
  return out.to(dtype);
}

torch::Tensor ddim_sample_fn(const std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>& predict_eps,
                          const torch::Tensor& x_init, const NoiseSchedule& schedule, int inference_steps, double eta,
                          const std::vector<std::uint64_t>& seeds, bool clip_sample) {
  const auto ts = ddim_timesteps(schedule.steps, inference_steps);
  const long B = x_init.size(0);
  auto x = x_init.clone();
  std::vector<Rng> step_rngs;
  for (std::uint64_t s : seeds) step_rngs.emplace_back(mix_seed({s, 0x7374657073ULL}));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const double ab = schedule.alphabar[t];
    const double ab_prev = i + 1 < ts.size() ? schedule.alphabar[ts[i + 1]] : 1.0;
    const auto eps = predict_eps(x, torch::full({B}, t, torch::kLong));
    auto x0 = (x - std::sqrt(1 - ab) * eps) / std::sqrt(ab);
    if (clip_sample) x0 = x0.clamp(-1.0, 1.0);
    // eps consistent with the (possibly clipped) x0 estimate
    const auto eps_dir = (x - std::sqrt(ab) * x0) / std::sqrt(1 - ab);
    const double sigma = eta * std::sqrt((1 - ab_prev) / (1 - ab)) * std::sqrt(1 - ab / ab_prev);
    x = std::sqrt(ab_prev) * x0 + std::sqrt(std::max(0.0, 1 - ab_prev - sigma * sigma)) * eps_dir;
    if (sigma > 0) {
      auto z = torch::empty_like(x, torch::TensorOptions().dtype(torch::kFloat64));
      auto* p = z.data_ptr<double>();
      for (auto& rng : step_rngs)
        for (int k = 0; k < kChunkLength * kActionDim; ++k) *p++ = rng.normal();
      x = x + sigma * z.to(x.scalar_type());
    }
  }
  return x;
}

torch::Tensor ddim_sample(Denoiser& denoiser, const torch::Tensor& obs, const NoiseSchedule& schedule,
                          int inference_steps, double eta, const std::vector<std::uint64_t>& seeds, bool clip_sample) {
  if (static_cast<long>(seeds.size()) != obs.size(0)) throw ShapeError("one seed per batch row is required");
  return ddim_sample_fn([&](const torch::Tensor& x, const torch::Tensor& t) { return denoiser->forward(x, t, obs); },
                     initial_noise(seeds, obs.scalar_type()), schedule, inference_steps, eta, seeds, clip_sample);
}

torch::Tensor diffusion_loss(Denoiser& denoiser, const NoiseSchedule& schedule, const torch::Tensor& x0,
                             const torch::Tensor& obs, const torch::Tensor& t, const torch::Tensor& eps) {
  const auto x_t = q_sample(schedule, x0, t, eps);
  return torch::mse_loss(denoiser->forward(x_t, t, obs), eps);
}

torch::Tensor diffusion_loss(Denoiser& denoiser, const NoiseSchedule& schedule, const torch::Tensor& x0,
                             const torch::Tensor& obs, at::Generator& gen) {
  const auto t = torch::randint(schedule.steps, {x0.size(0)}, gen, torch::TensorOptions().dtype(torch::kLong));
  const auto eps = torch::randn(x0.sizes(), gen, x0.options());
  return diffusion_loss(denoiser, schedule, x0, obs, t, eps);
}

}  // namespace graspdp
