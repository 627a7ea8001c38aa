#include "graspdp/serve/service.hpp"

#include <algorithm>
#include <condition_variable>
#include <thread>

#include "graspdp/core/errors.hpp"
#include "graspdp/det/map.hpp"
#include "graspdp/eval/metrics.hpp"
#include "graspdp/serve/codec.hpp"

namespace graspdp {

using nlohmann::json;

namespace {

struct Cancelled {};

std::uint64_t seed_field(const json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<std::uint64_t>(j.get<long long>());
  throw ValidationError("seed", "seed: must be a non-negative integer");
}

json vec3(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

json outcome_json(const EpisodeRecord& r) {
  json events = json::array();
  for (const auto& e : r.events)
    events.push_back({{"step", e.step},
                      {"gripper", vec3(e.gripper)},
                      {"commanded_width", e.commanded_width},
                      {"item_id", e.item_id ? json(*e.item_id) : json(nullptr)},
                      {"on_target", e.on_target}});
  return {{"task_success", r.outcome.task_success},
          {"grasp_attempts", r.outcome.grasp_attempts},
          {"grasp_successes", r.outcome.grasp_successes},
          {"first_grasped", r.outcome.first_grasped ? json(*r.outcome.first_grasped) : json(nullptr)},
          {"target_item", r.task.target_item},
          {"steps", r.actions.size()},
          {"events", events}};
}

json frame_json(const EpisodeRecord& r, std::size_t i, bool images) {
  const ObservationFrame& f = r.frames[i];
  json j{{"index", i},
         {"timestep", f.timestep},
         {"eef", vec3(f.eef_pose)},
         {"gripper_width", f.gripper_width},
         {"conditioning", f.conditioning ? box_object(*f.conditioning) : json(nullptr)}};
  if (i < r.actions.size()) {
    const auto& a = r.actions[i];
    j["action"] = json::array({a.x, a.y, a.z, a.width});
  }
  if (images) {
    json views = json::array();
    for (const auto& v : f.views) views.push_back(image_to_json(v));
    j["views"] = views;
  }
  return j;
}

}  // namespace

struct PromptService::Session {
  std::string id;
  TaskSpec task;  // scene task; the target is refined per prompt
  std::uint64_t seed = 0;
  std::string policy_name;
  int execution_horizon = 8;
  int max_steps = 200;

  mutable std::mutex mu;
  mutable std::condition_variable idle_cv;
  std::optional<GraspBox> prompt;
  json history = json::array();  // append-only
  struct Run {
    std::string id;
    std::string status = "running";  // running, done, failed
    std::size_t prompt_index = 0;
    EpisodeRecord record;  // grows while running
    std::string error;
  };
  std::vector<Run> runs;
  bool running = false;
  std::thread worker;
};

PromptService::PromptService(const Simulator& sim, const ServiceConfig& config) : sim_(sim), config_(config) {
  if (config.execution_horizon < 1 || config.execution_horizon > kChunkLength)
    throw ConfigError("execution horizon must lie in [1, 16]");
  for (const auto& [name, path] : config.policies) add_policy(name, Policy::load(path));
  if (config.detector) set_detector(Detector::load(*config.detector));
}

PromptService::~PromptService() {
  stopping_ = true;
  std::lock_guard lock(sessions_mu_);
  for (auto& [_, s] : sessions_)
    if (s->worker.joinable()) s->worker.join();
}

void PromptService::add_policy(const std::string& name, const Policy& policy) {
  check_compatible(policy, sim_, nullptr);
  std::lock_guard lock(registry_mu_);
  policies_[name] = std::make_shared<const Policy>(policy);
}

void PromptService::set_detector(const Detector& detector) {
  std::lock_guard lock(registry_mu_);
  detector_ = std::make_shared<const Detector>(detector);
}

std::shared_ptr<const Policy> PromptService::policy(const std::string& name) const {
  std::lock_guard lock(registry_mu_);
  const auto it = policies_.find(name);
  if (it == policies_.end()) throw ValidationError("checkpoint", "checkpoint: unknown policy '" + name + "'");
  return it->second;
}

std::shared_ptr<PromptService::Session> PromptService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
  return it->second;
}

json PromptService::create_session(const json& body) {
  if (!body.is_object()) throw ValidationError("body", "body: must be a JSON object");
  auto s = std::make_shared<Session>();
  TaskFamily family = TaskFamily::kPickGoods;
  if (body.contains("family")) {
    if (!body.at("family").is_string()) throw ValidationError("family", "family: must be a string");
    try {
      family = parse_family(body.at("family").get<std::string>());
    } catch (const InvalidTaskError& e) {
      throw ValidationError("family", std::string("family: ") + e.what());
    }
  }
  int placement = 0;
  if (body.contains("placement_id")) {
    if (!body.at("placement_id").is_number_integer()) throw ValidationError("placement_id", "placement_id: must be an integer");
    placement = body.at("placement_id").get<int>();
  }
  std::string target;
  if (body.contains("target_item")) {
    if (!body.at("target_item").is_string()) throw ValidationError("target_item", "target_item: must be a string");
    target = body.at("target_item").get<std::string>();
  }
  if (target.empty()) target = sim_.catalog().families.at(family).targets.front();
  try {
    s->task = sim_.make_task(family, placement, target);
    sim_.validate_task(s->task);
  } catch (const InvalidTaskError& e) {
    const std::string msg = e.what();
    throw ValidationError(msg.find("placement") != std::string::npos ? "placement_id" : "target_item", msg);
  }
  if (body.contains("seed")) {
    s->seed = seed_field(body.at("seed"));
  }
  {
    std::lock_guard lock(registry_mu_);
    if (body.contains("checkpoint")) {
      if (!body.at("checkpoint").is_string()) throw ValidationError("checkpoint", "checkpoint: must be a string");
      s->policy_name = body.at("checkpoint").get<std::string>();
    } else if (!policies_.empty()) {
      s->policy_name = policies_.begin()->first;
    } else {
      throw PreconditionError("no policy checkpoints are loaded");
    }
  }
  policy(s->policy_name);
  s->execution_horizon = body.value("execution_horizon", config_.execution_horizon);
  s->max_steps = body.value("max_steps", config_.max_steps);
  if (s->execution_horizon < 1 || s->execution_horizon > kChunkLength)
    throw ValidationError("execution_horizon", "execution_horizon: must lie in [1, 16]");
  if (s->max_steps < 0) throw ValidationError("max_steps", "max_steps: must be non-negative");
  {
    std::lock_guard lock(sessions_mu_);
    s->id = "s" + std::to_string(next_session_++);
    sessions_[s->id] = s;
  }
  return {{"session_id", s->id},
          {"task", task_to_json(s->task)},
          {"seed", s->seed},
          {"checkpoint", s->policy_name},
          {"execution_horizon", s->execution_horizon},
          {"max_steps", s->max_steps}};
}

json PromptService::scene(const std::string& session_id) const {
  const auto s = find(session_id);
  TaskSpec task;
  std::uint64_t seed;
  bool running;
  {
    std::lock_guard lock(s->mu);
    task = s->task;
    seed = s->seed;
    running = s->running;
  }
  const WorldState state = sim_.reset(task, seed);
  const auto views = sim_.render_all(state);
  std::shared_ptr<const Detector> det;
  {
    std::lock_guard lock(registry_mu_);
    det = detector_;
  }
  const std::vector<GraspBox> boxes = det ? det->detect(views.at(0)) : sim_.groundtruth_boxes(state, sim_.camera(0));

  json jviews = json::array();
  for (std::size_t v = 0; v < views.size(); ++v) {
    json img = image_to_json(views[v]);
    img["view_id"] = v;
    jviews.push_back(img);
  }
  json jboxes = json::array();
  for (const auto& b : boxes) jboxes.push_back(box_object(b));
  json items = json::array();
  for (const auto& item : state.items) {
    json it{{"item_id", item.spec.item_id},
            {"category", item.spec.category},
            {"position", json::array({item.pose.x, item.pose.y})},
            {"graspable", item.spec.graspable}};
    if (item.spec.graspable) it["grasp_box"] = box_object(sim_.region_box(item, sim_.camera(0)));
    items.push_back(it);
  }
  return {{"session_id", session_id},
          {"task", task_to_json(task)},
          {"views", jviews},
          {"boxes", jboxes},
          {"box_source", det ? "detector" : "groundtruth"},
          {"world",
           {{"items", items},
            {"gripper", {{"position", vec3(state.gripper.position)}, {"width", state.gripper.width}}},
            {"target_zone", json::array({task.target_zone.x_min, task.target_zone.y_min, task.target_zone.x_max,
                                         task.target_zone.y_max})},
            {"step", state.step_count}}},
          {"rollout_status", running ? "running" : "idle"}};
}

json PromptService::post_prompt(const std::string& session_id, const json& body) {
  const auto s = find(session_id);
  if (!body.is_object() || !body.contains("box")) throw ValidationError("box", "box: missing");
  const GraspBox box = box_from_object(body.at("box"));
  const CameraModel& cam = sim_.camera(0);
  validate_box(box, cam.width, cam.height);
  if (box.category >= sim_.catalog().category_count)
    throw ValidationError("category", "category: must be below " + std::to_string(sim_.catalog().category_count));
  std::lock_guard lock(s->mu);
  s->prompt = box;
  const std::size_t index = s->history.size();
  s->history.push_back({{"index", index}, {"box", box_object(box)}, {"rollouts", json::array()}});
  return {{"accepted", true}, {"prompt_index", index}, {"history_length", s->history.size()}};
}

namespace {

// The scene item whose grasp box overlaps the prompt most; the session's own
// target when nothing overlaps.
std::string prompted_target(const Simulator& sim, const TaskSpec& task, std::uint64_t seed, const GraspBox& prompt) {
  const WorldState state = sim.reset(task, seed);
  std::string best = task.target_item;
  double best_iou = 0.0;
  const auto& targets = sim.catalog().families.at(task.family).targets;
  for (const auto& item : state.items) {
    if (!item.spec.graspable) continue;
    if (std::find(targets.begin(), targets.end(), item.spec.item_id) == targets.end()) continue;
    GraspBox b = sim.region_box(item, sim.camera(0));
    b.category = prompt.category;
    const double v = iou(b, prompt);
    if (v > best_iou) {
      best_iou = v;
      best = item.spec.item_id;
    }
  }
  return best;
}

}  // namespace

TaskSpec PromptService::prompted_task(const std::string& session_id) const {
  const auto s = find(session_id);
  std::lock_guard lock(s->mu);
  if (!s->prompt) throw PreconditionError("post a prompt before starting a rollout");
  TaskSpec task = s->task;
  task.prompt_box = s->prompt;
  task.target_item = prompted_target(sim_, s->task, s->seed, *s->prompt);
  return task;
}

RolloutOptions PromptService::rollout_options(const std::string& session_id) const {
  const auto s = find(session_id);
  RolloutOptions o;
  o.execution_horizon = s->execution_horizon;
  o.max_steps = s->max_steps;
  o.box_source = BoxSource::kPrompt;
  o.record_views = true;
  return o;
}

json PromptService::start_rollout(const std::string& session_id, const json& body) {
  const auto s = find(session_id);
  if (!body.is_null() && !body.is_object()) throw ValidationError("body", "body: must be a JSON object");
  std::uint64_t seed;
  {
    std::lock_guard lock(s->mu);
    if (s->running) throw BusyError("a rollout is already running in session " + session_id);
    seed = s->seed;
  }
  if (body.is_object() && body.contains("seed")) {
    seed = seed_field(body.at("seed"));
  }
  const TaskSpec task = prompted_task(session_id);
  const RolloutOptions options = rollout_options(session_id);
  auto shared = policy(s->policy_name);

  std::lock_guard lock(s->mu);
  if (s->running) throw BusyError("a rollout is already running in session " + session_id);
  if (s->worker.joinable()) s->worker.join();
  // Older rollouts keep their records but drop pixels.
  for (auto& run : s->runs)
    for (auto& f : run.record.frames) f.views.clear();
  Session::Run run;
  run.id = "r" + std::to_string(s->runs.size() + 1);
  run.prompt_index = s->history.size() - 1;
  run.record.task = task;
  run.record.seed = seed;
  s->runs.push_back(run);
  s->running = true;
  const std::size_t slot = s->runs.size() - 1;

  s->worker = std::thread([this, s, slot, task, seed, options, shared] {
    EpisodeRecord result;
    std::string error;
    try {
      Policy local = *shared;
      result = graspdp::rollout(local, sim_, task, seed, options, nullptr,
                                [&](std::size_t, const EpisodeRecord& partial) {
                                  if (stopping_) throw Cancelled{};
                                  std::lock_guard l(s->mu);
                                  auto& rec = s->runs[slot].record;
                                  for (std::size_t i = rec.frames.size(); i < partial.frames.size(); ++i)
                                    rec.frames.push_back(partial.frames[i]);
                                  rec.actions = partial.actions;
                                });
    } catch (const Cancelled&) {
      error = "cancelled at shutdown";
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard l(s->mu);
    auto& run = s->runs[slot];
    if (error.empty()) {
      run.record = std::move(result);
      run.status = "done";
      auto& entry = s->history[run.prompt_index];
      entry["rollouts"].push_back({{"rollout_id", run.id}, {"seed", seed}, {"outcome", outcome_json(run.record)}});
    } else {
      run.status = "failed";
      run.error = error;
    }
    s->running = false;
    s->idle_cv.notify_all();
  });
  return {{"rollout_id", s->runs[slot].id}, {"status", "running"}, {"seed", seed}, {"task", task_to_json(task)}};
}

json PromptService::rollout(const std::string& session_id, const std::string& rollout_id, std::size_t since,
                            bool images) const {
  const auto s = find(session_id);
  std::lock_guard lock(s->mu);
  const auto it = std::find_if(s->runs.begin(), s->runs.end(), [&](const auto& r) { return r.id == rollout_id; });
  if (it == s->runs.end()) throw NotFoundError("unknown rollout '" + rollout_id + "' in session " + session_id);
  const auto& rec = it->record;
  json frames = json::array();
  for (std::size_t i = since; i < rec.frames.size(); ++i) frames.push_back(frame_json(rec, i, images));
  json out{{"rollout_id", it->id},
           {"status", it->status},
           {"frame_count", rec.frames.size()},
           {"since", since},
           {"frames", frames},
           {"prompt", rec.task.prompt_box ? box_object(*rec.task.prompt_box) : json(nullptr)},
           {"task", task_to_json(rec.task)},
           {"seed", rec.seed}};
  if (it->status == "done") out["outcome"] = outcome_json(rec);
  if (it->status == "failed") out["error"] = it->error;
  return out;
}

json PromptService::history(const std::string& session_id) const {
  const auto s = find(session_id);
  std::lock_guard lock(s->mu);
  Counts c;
  json picks = json::object();
  for (const auto& entry : s->history)
    for (const auto& r : entry["rollouts"]) {
      const auto& o = r["outcome"];
      c += Counts{1, o["task_success"].get<bool>() ? 1 : 0, o["grasp_attempts"].get<long>(), o["grasp_successes"].get<long>()};
      if (!o["first_grasped"].is_null()) {
        const std::string item = o["first_grasped"];
        picks[item] = picks.value(item, 0) + 1;
      }
    }
  const auto gsr = c.gsr();
  return {{"session_id", session_id},
          {"prompts", s->history},
          {"active_prompt", s->prompt ? box_object(*s->prompt) : json(nullptr)},
          {"tallies",
           {{"rollouts", c.episodes},
            {"task_successes", c.task_successes},
            {"grasp_attempts", c.grasp_attempts},
            {"grasp_successes", c.grasp_successes},
            {"tsr", c.episodes ? json(c.tsr()) : json(nullptr)},
            {"gsr", gsr ? json(*gsr) : json(nullptr)},
            {"first_grasped", picks}}}};
}

std::optional<EpisodeRecord> PromptService::rollout_record(const std::string& session_id,
                                                           const std::string& rollout_id) const {
  const auto s = find(session_id);
  std::lock_guard lock(s->mu);
  for (const auto& r : s->runs)
    if (r.id == rollout_id && r.status == "done") return r.record;
  return std::nullopt;
}

void PromptService::wait_idle(const std::string& session_id) const {
  const auto s = find(session_id);
  std::unique_lock lock(s->mu);
  s->idle_cv.wait(lock, [&] { return !s->running; });
}

}  // namespace graspdp
