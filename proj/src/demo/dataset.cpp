#include "graspdp/demo/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"

namespace graspdp {

using nlohmann::json;

std::vector<DemoCondition> DatasetManifest::tally() const {
  std::map<std::pair<std::string, int>, int> counts;
  std::vector<std::pair<std::string, int>> order;
  for (const auto& e : episodes) {
    const auto key = std::make_pair(e.target_item, e.placement_id);
    if (counts[key]++ == 0) order.push_back(key);
  }
  std::vector<DemoCondition> out;
  for (const auto& key : order) out.push_back({key.first, key.second, counts[key]});
  return out;
}

int DatasetManifest::count_for(const std::string& target_item) const {
  return static_cast<int>(std::count_if(episodes.begin(), episodes.end(),
                                        [&](const ManifestEpisode& e) { return e.target_item == target_item; }));
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  json j;
  j["format_version"] = format_version;
  j["family"] = to_string(family);
  j["seed"] = seed;
  j["box_provenance"] = box_provenance;
  j["normalization_stats"] = normalization_stats;
  j["views_stored"] = views_stored;
  j["conditions"] = json::array();
  for (const auto& c : conditions)
    j["conditions"].push_back({{"target", c.target_item}, {"placement", c.placement_id}, {"count", c.count}});
  j["episodes"] = json::array();
  for (const auto& e : episodes)
    j["episodes"].push_back(
        {{"id", e.episode_id}, {"file", e.file}, {"target", e.target_item}, {"placement", e.placement_id}});
  if (fewshot) j["fewshot"] = {{"heldout_item", fewshot->heldout_item}, {"k", fewshot->k}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  try {
    json j;
    in >> j;
    if (!j.contains("format_version")) throw VersionError("manifest has no format_version field");
    m.format_version = j.at("format_version");
    if (m.format_version != kDatasetFormatVersion)
      throw VersionError("manifest format version " + std::to_string(m.format_version) + " is not supported");
    m.family = parse_family(j.at("family").get<std::string>());
    m.seed = j.value("seed", std::uint64_t{0});
    m.box_provenance = j.at("box_provenance");
    m.normalization_stats = j.value("normalization_stats", std::string{});
    m.views_stored = j.value("views_stored", true);
    for (const auto& c : j.at("conditions")) m.conditions.push_back({c.at("target"), c.at("placement"), c.at("count")});
    for (const auto& e : j.at("episodes"))
      m.episodes.push_back({e.at("id"), e.at("file"), e.at("target"), e.at("placement")});
    if (j.contains("fewshot")) m.fewshot = FewshotInfo{j["fewshot"].at("heldout_item"), j["fewshot"].at("k")};
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + ": " + e.what());
  }
  m.root = path.parent_path();
  return m;
}

TaskSpec demo_task(const Simulator& sim, TaskFamily family, const DemoCondition& condition, std::uint64_t seed) {
  TaskSpec task = sim.make_task(family, condition.placement_id, condition.target_item);
  if (sim.catalog().family(family).prompted) {
    const WorldState state = sim.reset(task, seed);
    task.prompt_box = sim.region_box(*state.find(task.target_item), sim.camera(0));
  }
  return task;
}

EpisodeRecord generate_episode(const Simulator& sim, const TaskSpec& task, std::uint64_t seed,
                               const GenerateOptions& options, const std::string& episode_id) {
  EpisodeRecord ep;
  ep.episode_id = episode_id;
  ep.task = task;
  ep.seed = seed;
  WorldState state = sim.reset(task, seed);
  while (!sim.task_success(state)) {
    if (static_cast<int>(ep.actions.size()) >= options.max_steps)
      throw ExpertFailure("episode " + episode_id + " did not finish within " + std::to_string(options.max_steps) +
                          " steps");
    const ActionCommand action = scripted_expert(sim, state, options.expert);
    ep.frames.push_back(observe(sim, state, options.store_views));
    ep.actions.push_back(action);
    state = sim.step(state, action);
  }
  ep.events = state.events;
  ep.outcome = outcome_from(sim, state);
  return ep;
}

DatasetManifest generate_dataset(const Simulator& sim, TaskFamily family, const GenerateOptions& options,
                                 const std::filesystem::path& out_dir) {
  const auto& fam = sim.catalog().family(family);
  if (options.divisor < 1) throw ConfigError("divisor must be >= 1");
  if (options.count_per_condition && *options.count_per_condition < 1) throw ConfigError("counts must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "episodes", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.family = family;
  manifest.seed = options.seed;
  manifest.views_stored = options.store_views;
  manifest.root = out_dir;

  int attempts = 0;
  int failures = 0;
  for (std::size_t ci = 0; ci < fam.protocol.size(); ++ci) {
    DemoCondition condition = fam.protocol[ci];
    // Few-shot conditions are already tiny; the divisor only scales the main protocol.
    const bool fewshot = std::find(fam.fewshot_items.begin(), fam.fewshot_items.end(), condition.target_item) !=
                         fam.fewshot_items.end();
    const int divisor = fewshot ? 1 : options.divisor;
    const int wanted = options.count_per_condition ? *options.count_per_condition
                                                   : std::max(1, (condition.count + divisor - 1) / divisor);
    int kept = 0;
    for (std::uint64_t n = 0; kept < wanted; ++n) {
      const std::uint64_t seed = mix_seed({options.seed, ci, n});
      char name[160];
      std::snprintf(name, sizeof(name), "%s_%s_p%d_%04d", std::string(to_string(family)).c_str(),
                    condition.target_item.c_str(), condition.placement_id, kept);
      ++attempts;
      try {
        const TaskSpec task = demo_task(sim, family, condition, seed);
        const EpisodeRecord ep = generate_episode(sim, task, seed, options, name);
        const std::string file = std::string("episodes/") + name + ".h5";
        write_episode(out_dir / file, ep, options.store_views);
        manifest.episodes.push_back({name, file, condition.target_item, condition.placement_id});
        ++kept;
      } catch (const ExpertFailure&) {
        ++failures;
      }
      if (attempts >= 20 && failures > options.max_failure_rate * attempts)
        throw ExpertFailure("expert failure rate " + std::to_string(failures) + "/" + std::to_string(attempts) +
                            " exceeds the limit while generating " + condition.target_item);
    }
    condition.count = kept;
    manifest.conditions.push_back(condition);
  }
  manifest.save(out_dir / "manifest.json");
  return manifest;
}

DatasetManifest build_fewshot_split(const DatasetManifest& manifest, const std::string& heldout_item, int k) {
  if (k < 0) throw ConfigError("k must be non-negative");
  const int available = manifest.count_for(heldout_item);
  if (available == 0 && k > 0) throw ConfigError("held-out item '" + heldout_item + "' has no episodes");
  if (k > available)
    throw ConfigError("k = " + std::to_string(k) + " exceeds the " + std::to_string(available) +
                      " available episodes of " + heldout_item);
  DatasetManifest out = manifest;
  out.episodes.clear();
  int taken = 0;
  for (const auto& e : manifest.episodes) {
    if (e.target_item != heldout_item) {
      out.episodes.push_back(e);
    } else if (taken < k) {
      out.episodes.push_back(e);
      ++taken;
    }
  }
  out.conditions = out.tally();
  out.fewshot = FewshotInfo{heldout_item, k};
  return out;
}

}  // namespace graspdp
