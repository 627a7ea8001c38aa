#include "graspdp/policy/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"
#include "graspdp/det/oracle.hpp"

namespace graspdp {

namespace fs = std::filesystem;

nlohmann::json to_json(const TrainConfig& c) {
  return {{"seed", c.seed},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"lr", c.lr},
          {"lr_final_ratio", c.lr_final_ratio},
          {"warmup_steps", c.warmup_steps},
          {"weight_decay", c.weight_decay},
          {"ema", c.ema},
          {"ema_decay", c.ema_decay},
          {"box_conditioning", c.box_conditioning},
          {"manifest", c.manifest.string()},
          {"out_dir", c.out_dir.string()},
          {"checkpoint_every", c.checkpoint_every},
          {"log_every", c.log_every},
          {"golden_windows", c.golden_windows},
          {"encoder", to_json(c.encoder)},
          {"denoiser", to_json(c.denoiser)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{
      "seed",         "batch_size",       "steps",     "lr",       "lr_final_ratio", "warmup_steps",
      "weight_decay", "ema",              "ema_decay", "box_conditioning", "manifest", "out_dir",
      "checkpoint_every", "log_every",    "golden_windows", "encoder", "denoiser"};
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown train config key: " + key);
  TrainConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    c.lr_final_ratio = j.value("lr_final_ratio", c.lr_final_ratio);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.ema = j.value("ema", c.ema);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.box_conditioning = j.value("box_conditioning", c.box_conditioning);
    c.manifest = j.value("manifest", std::string());
    c.out_dir = j.value("out_dir", std::string());
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.log_every = j.value("log_every", c.log_every);
    c.golden_windows = j.value("golden_windows", c.golden_windows);
    if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"));
    if (j.contains("denoiser")) c.denoiser = denoiser_config_from_json(j.at("denoiser"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  if (c.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (c.steps < 0) throw ConfigError("steps must be non-negative");
  if (!(c.lr > 0)) throw ConfigError("lr must be positive");
  if (c.ema && !(c.ema_decay >= 0 && c.ema_decay < 1)) throw ConfigError("ema_decay must lie in [0, 1)");
  return c;
}

std::string arm_name(bool box_conditioning) { return box_conditioning ? "boxcond" : "baseline"; }

std::vector<WindowIndex> make_windows(const std::vector<int>& episode_lengths) {
  std::vector<WindowIndex> out;
  for (std::size_t e = 0; e < episode_lengths.size(); ++e) {
    const int n = episode_lengths[e];
    for (int t = 0; t < n; ++t) {
      WindowIndex w;
      w.episode = static_cast<int>(e);
      w.t = t;
      w.history = {std::max(t - 1, 0), t};
      for (int i = 0; i < kChunkLength; ++i) w.target[i] = std::min(t + i, n - 1);
      out.push_back(w);
    }
  }
  if (out.empty()) throw ConfigError("no training windows: the dataset has no frames");
  return out;
}

std::optional<GraspBox> conditioning_box(const EpisodeRecord& episode, const ObservationFrame& frame) {
  if (episode.task.prompt_box) return episode.task.prompt_box;
  return select_top(frame.boxes);
}

ObsStep obs_step(const ObservationFrame& frame, std::optional<GraspBox> box) {
  return {frame.views, frame.eef_pose, frame.gripper_width, box};
}

WindowDataset::WindowDataset(const Simulator& sim, const DatasetManifest& manifest, bool cache_views) : sim_(sim) {
  if (manifest.episodes.empty()) throw ConfigError("dataset manifest lists no episodes");
  for (const auto& e : manifest.episodes) episodes_.push_back(read_episode(manifest.episode_path(e), false));
  index(cache_views);
}

WindowDataset::WindowDataset(const Simulator& sim, std::vector<EpisodeRecord> episodes, bool cache_views)
    : sim_(sim), episodes_(std::move(episodes)) {
  // Stored pixels are never trusted over a re-render from the snapshot.
  for (auto& ep : episodes_)
    for (auto& f : ep.frames) f.views.clear();
  index(cache_views);
}

void WindowDataset::index(bool cache_views) {
  if (cache_views)
    for (auto& ep : episodes_)
      for (auto& f : ep.frames) materialize_views(sim_, ep, f);
  std::vector<int> lengths;
  for (const auto& ep : episodes_) {
    if (ep.actions.size() != ep.frames.size()) throw ShapeError(ep.episode_id + ": frames and actions differ in length");
    lengths.push_back(static_cast<int>(ep.frames.size()));
  }
  windows_ = make_windows(lengths);
}

Normalizer WindowDataset::fit_normalizer() const {
  std::vector<std::vector<double>> actions, lowdim;
  for (const auto& ep : episodes_) {
    for (const auto& a : ep.actions) actions.push_back(action_vec(a));
    for (const auto& f : ep.frames) lowdim.push_back({f.eef_pose.x, f.eef_pose.y, f.eef_pose.z, f.gripper_width});
  }
  return {RangeNormalizer::fit(actions), RangeNormalizer::fit(lowdim)};
}

std::vector<std::vector<ObsStep>> WindowDataset::histories(const std::vector<std::size_t>& window_ids) const {
  std::vector<std::vector<ObsStep>> out;
  out.reserve(window_ids.size());
  for (std::size_t id : window_ids) {
    const WindowIndex& w = windows_.at(id);
    const EpisodeRecord& ep = episodes_[w.episode];
    std::vector<ObsStep> h;
    for (int fi : w.history) {
      ObservationFrame f = ep.frames[fi];
      materialize_views(sim_, ep, f);
      h.push_back(obs_step(f, conditioning_box(ep, ep.frames[fi])));
    }
    out.push_back(std::move(h));
  }
  return out;
}

torch::Tensor WindowDataset::targets(const std::vector<std::size_t>& window_ids, const Normalizer& n) const {
  auto out = torch::empty({static_cast<long>(window_ids.size()), kChunkLength, kActionDim}, torch::kFloat32);
  auto* p = out.data_ptr<float>();
  for (std::size_t id : window_ids) {
    const WindowIndex& w = windows_.at(id);
    for (int a : w.target)
      for (double v : n.action.normalize(action_vec(episodes_[w.episode].actions[a]))) *p++ = static_cast<float>(v);
  }
  return out;
}

ObsBatch WindowDataset::batch(const Policy& policy, const std::vector<std::size_t>& window_ids) const {
  const auto h = histories(window_ids);
  std::vector<std::vector<const ObsStep*>> ptrs;
  for (const auto& steps : h) {
    std::vector<const ObsStep*> row;
    for (const auto& s : steps) row.push_back(&s);
    ptrs.push_back(std::move(row));
  }
  return policy.make_batch(ptrs);
}

namespace {

double scheduled_lr(const TrainConfig& c, int step) {
  if (c.warmup_steps > 0 && step < c.warmup_steps) return c.lr * (step + 1) / c.warmup_steps;
  const int span = std::max(1, c.steps - c.warmup_steps);
  const double u = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
  const double lo = c.lr * c.lr_final_ratio;
  return lo + 0.5 * (c.lr - lo) * (1.0 + std::cos(std::numbers::pi * u));
}

void ema_update(Policy& ema, const Policy& live, double decay) {
  torch::NoGradGuard ng;
  const auto dst = ema.parameters();
  const auto src = live.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].mul_(decay).add_(src[i], 1.0 - decay);
}

std::vector<std::size_t> golden_ids(std::size_t windows, int count) {
  std::vector<std::size_t> ids;
  const std::size_t n = std::min<std::size_t>(windows, std::max(count, 0));
  for (std::size_t i = 0; i < n; ++i) ids.push_back(i * windows / n);
  return ids;
}

}  // namespace

TrainResult train_policy(const Simulator& sim, const TrainConfig& config, const TrainHooks& hooks) {
  if (config.manifest.empty()) throw ConfigError("train config names no dataset manifest");
  if (!fs::exists(config.manifest)) throw IoError("dataset manifest not found: " + config.manifest.string());
  const WindowDataset data(sim, DatasetManifest::load(config.manifest));
  return train_policy(sim, config, data, hooks);
}

TrainResult train_policy(const Simulator&, const TrainConfig& config, const WindowDataset& data,
                         const TrainHooks& hooks) {
  torch::AutoGradMode grad_on(true);
  EncoderConfig enc = config.encoder;
  enc.box_conditioning = config.box_conditioning;
  const Normalizer normalizer = data.fit_normalizer();
  Policy live(enc, config.denoiser, normalizer, mix_seed({config.seed, 1}));
  std::optional<Policy> ema;
  if (config.ema) {
    ema.emplace(enc, config.denoiser, normalizer, mix_seed({config.seed, 1}));
    ema->copy_weights_from(live);
    ema->set_training(false);
  }

  nlohmann::json record{{"config", to_json(config)}, {"arm", arm_name(config.box_conditioning)},
                        {"seed", config.seed}, {"windows", data.windows().size()},
                        {"episodes", data.episodes().size()}};
  const auto golden = golden_ids(data.windows().size(), config.golden_windows);

  const bool persist = !config.out_dir.empty();
  std::ofstream log;
  if (persist) {
    fs::create_directories(config.out_dir);
    log.open(config.out_dir / "train_log.jsonl");
    if (!log) throw IoError("cannot write training log in " + config.out_dir.string());
  }

  auto save = [&](Policy& p, const fs::path& path, int step, double loss) {
    p.train_record() = record;
    p.train_record()["step"] = step;
    p.train_record()["final_loss"] = loss;
    if (!golden.empty()) p.set_golden(data.batch(p, golden), mix_seed({config.seed, 3}));
    p.save(path);
  };

  torch::optim::AdamW opt(live.parameters(), torch::optim::AdamWOptions(config.lr).weight_decay(config.weight_decay));
  auto gen = at::detail::createCPUGenerator(mix_seed({config.seed, 2}));
  Rng sampler(mix_seed({config.seed, 4}));
  std::vector<double> losses;
  fs::path last_good;
  const auto start = std::chrono::steady_clock::now();

  live.set_training(true);
  for (int step = 0; step < config.steps; ++step) {
    if (hooks.before_step) hooks.before_step(step, live);
    std::vector<std::size_t> ids(config.batch_size);
    for (auto& id : ids) id = sampler.below(data.windows().size());
    const ObsBatch obs = data.batch(live, ids);
    const auto x0 = data.targets(ids, normalizer);

    const double lr = scheduled_lr(config, step);
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
    opt.zero_grad();
    const auto loss = diffusion_loss(live.denoiser(), live.schedule(), x0, live.encode(obs), gen);
    const double value = loss.item<double>();
    if (!std::isfinite(value))
      throw TrainingAborted("non-finite loss at step " + std::to_string(step), last_good.string());
    loss.backward();
    opt.step();
    if (ema) ema_update(*ema, live, std::min(config.ema_decay, (1.0 + step) / (10.0 + step)));
    losses.push_back(value);

    if (persist && config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.steps)) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log << nlohmann::json{{"step", step}, {"loss", value}, {"lr", lr}, {"wall_time", wall}}.dump() << '\n';
      log.flush();
    }
    if (persist && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
        step + 1 < config.steps) {
      const fs::path path = config.out_dir / ("step_" + std::to_string(step + 1) + ".ckpt");
      save(ema ? *ema : live, path, step + 1, value);
      last_good = path;
    }
  }
  live.set_training(false);

  Policy& final_policy = ema ? *ema : live;
  const double final_loss = losses.empty() ? std::nan("") : losses.back();
  TrainResult result{final_policy, losses, {}};
  if (persist) {
    result.checkpoint = config.out_dir / "policy.ckpt";
    save(final_policy, result.checkpoint, config.steps, final_loss);
    result.policy = final_policy;
  } else {
    final_policy.train_record() = record;
    final_policy.train_record()["final_loss"] = final_loss;
    result.policy = final_policy;
  }
  return result;
}

}  // namespace graspdp
