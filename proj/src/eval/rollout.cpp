#include "graspdp/eval/rollout.hpp"

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"

namespace graspdp {

std::string to_string(BoxSource s) {
  switch (s) {
    case BoxSource::kOracle: return "oracle";
    case BoxSource::kTrained: return "trained";
    case BoxSource::kPrompt: return "prompt";
  }
  return "?";
}

BoxSource parse_box_source(const std::string& s) {
  if (s == "oracle") return BoxSource::kOracle;
  if (s == "trained") return BoxSource::kTrained;
  if (s == "prompt") return BoxSource::kPrompt;
  throw ConfigError("unknown box source: " + s);
}

void check_compatible(const Policy& policy, const Simulator& sim, const Detector* detector) {
  const EncoderConfig& e = policy.encoder_config();
  if (e.category_count != sim.catalog().category_count)
    throw ConfigError("policy expects " + std::to_string(e.category_count) + " categories, the scene catalog has " +
                      std::to_string(sim.catalog().category_count));
  if (e.view_count != static_cast<int>(sim.cameras().size())) throw ConfigError("policy and simulator view counts differ");
  for (const auto& cam : sim.cameras())
    if (cam.width != e.image_width || cam.height != e.image_height)
      throw ConfigError("policy and simulator image sizes differ");
  if (detector && detector->config().category_count != e.category_count)
    throw ConfigError("detector and policy category counts differ");
}

namespace {

struct Env {
  EpisodeRecord record;
  WorldState state;
  std::vector<ObsStep> steps;  // one per recorded frame, for the history
  int chunk = 0;
  bool done = false;
};

}  // namespace

std::vector<EpisodeRecord> rollout_batch(Policy& policy, const Simulator& sim, const std::vector<RolloutJob>& jobs,
                                         const RolloutOptions& options, const Detector* detector,
                                         const FrameCallback& on_frame) {
  if (options.execution_horizon < 1 || options.execution_horizon > kChunkLength)
    throw ConfigError("execution horizon must lie in [1, 16]");
  if (options.max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (options.box_source == BoxSource::kTrained && !detector)
    throw ConfigError("the trained box source needs a detector");
  check_compatible(policy, sim, detector);
  const int W = policy.encoder_config().image_width, H = policy.encoder_config().image_height;

  std::vector<Env> envs(jobs.size());
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    sim.validate_task(jobs[j].task);
    if (options.box_source == BoxSource::kPrompt && !jobs[j].task.prompt_box)
      throw PreconditionError("prompt mode needs a prompt box on every task");
    Env& env = envs[j];
    env.record.episode_id = "rollout_" + std::to_string(j);
    env.record.task = jobs[j].task;
    env.record.seed = jobs[j].seed;
    env.record.box_source = options.box_source == BoxSource::kTrained ? "detector" : to_string(options.box_source);
    env.state = sim.reset(jobs[j].task, jobs[j].seed);
    env.done = options.max_steps == 0;
  }

  // Observe the current state of env j, choose its conditioning box.
  auto observe_env = [&](std::size_t j) {
    Env& env = envs[j];
    ObservationFrame frame = observe(sim, env.state, true);
    std::optional<GraspBox> box;
    switch (options.box_source) {
      case BoxSource::kOracle:
        frame.boxes = oracle_detect(frame.boxes, options.corruption,
                                    mix_seed({jobs[j].seed, static_cast<std::uint64_t>(frame.timestep), 0x626f78}), W, H);
        box = select_top(frame.boxes);
        break;
      case BoxSource::kTrained:
        frame.boxes = detector->detect(frame.views.at(0));
        box = select_top(frame.boxes);
        break;
      case BoxSource::kPrompt:
        box = env.record.task.prompt_box;
        break;
    }
    frame.conditioning = box;
    env.steps.push_back(obs_step(frame, box));
    if (!options.record_views) frame.views.clear();
    env.record.frames.push_back(std::move(frame));
  };

  for (std::size_t j = 0; j < envs.size(); ++j)
    if (!envs[j].done) observe_env(j);

  const int T = policy.encoder_config().history;
  while (true) {
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < envs.size(); ++j)
      if (!envs[j].done) active.push_back(j);
    if (active.empty()) break;

    std::vector<std::vector<const ObsStep*>> histories;
    std::vector<std::uint64_t> seeds;
    for (std::size_t j : active) {
      Env& env = envs[j];
      const int now = static_cast<int>(env.steps.size()) - 1;
      std::vector<const ObsStep*> h;
      for (int k = T - 1; k >= 0; --k) h.push_back(&env.steps[std::max(now - k, 0)]);
      histories.push_back(std::move(h));
      seeds.push_back(mix_seed({jobs[j].seed, static_cast<std::uint64_t>(env.chunk++), 0x706f6c}));
    }
    const auto chunks = policy.act(histories, seeds);

    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t j = active[a];
      Env& env = envs[j];
      for (int i = 0; i < options.execution_horizon; ++i) {
        env.record.actions.push_back(chunks[a][i]);
        env.state = sim.step(env.state, chunks[a][i]);
        const bool finished = sim.task_success(env.state) ||
                              static_cast<int>(env.record.actions.size()) >= options.max_steps;
        if (finished) {
          env.done = true;
          break;
        }
        observe_env(j);
        if (on_frame) on_frame(j, env.record);
      }
      // Drop pixels of frames that no longer feed the history.
      const std::size_t keep = static_cast<std::size_t>(T);
      for (std::size_t f = 0; f + keep < env.steps.size(); ++f) env.steps[f].views.clear();
      if (env.done) {
        env.record.events = env.state.events;
        env.record.outcome = outcome_from(sim, env.state);
        if (on_frame) on_frame(j, env.record);
      }
    }
  }
  std::vector<EpisodeRecord> out;
  for (std::size_t j = 0; j < envs.size(); ++j) {
    Env& env = envs[j];
    if (options.max_steps == 0) {
      env.record.events = env.state.events;
      env.record.outcome = outcome_from(sim, env.state);
    }
    out.push_back(std::move(env.record));
  }
  return out;
}

EpisodeRecord rollout(Policy& policy, const Simulator& sim, const TaskSpec& task, std::uint64_t seed,
                      const RolloutOptions& options, const Detector* detector, const FrameCallback& on_frame) {
  return std::move(rollout_batch(policy, sim, {{task, seed}}, options, detector, on_frame).front());
}

}  // namespace graspdp
