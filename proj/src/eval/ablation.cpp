#include "graspdp/eval/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"

namespace graspdp {

namespace fs = std::filesystem;

std::vector<RolloutJob> make_grid(const Simulator& sim, TaskFamily family, int episodes_per_condition,
                                  std::uint64_t seed, const std::vector<std::string>& targets) {
  if (episodes_per_condition < 0) throw ConfigError("episodes per condition must be non-negative");
  const FamilyCatalog& fc = sim.catalog().family(family);
  auto listed = [&](const std::string& item) {
    return std::find(targets.begin(), targets.end(), item) != targets.end();
  };
  auto fewshot = [&](const std::string& item) {
    return std::find(fc.fewshot_items.begin(), fc.fewshot_items.end(), item) != fc.fewshot_items.end();
  };
  for (const auto& t : targets)
    if (std::find(fc.targets.begin(), fc.targets.end(), t) == fc.targets.end())
      throw ConfigError(t + " is not a target of " + std::string(to_string(family)));
  std::vector<RolloutJob> grid;
  for (std::size_t ci = 0; ci < fc.protocol.size(); ++ci) {
    const DemoCondition& cond = fc.protocol[ci];
    if (targets.empty() ? fewshot(cond.target_item) : !listed(cond.target_item)) continue;
    for (int e = 0; e < episodes_per_condition; ++e) {
      const std::uint64_t s = mix_seed({seed, ci, static_cast<std::uint64_t>(e)});
      grid.push_back({demo_task(sim, family, cond, s), s});
    }
  }
  return grid;
}

std::string grasp_strategy(const std::string& item_id) {
  if (item_id.find("mug") != std::string::npos) return "handle";
  if (item_id == "blue_plastic_cup") return "wall";
  return "diameter";
}

Counts Report::model_total(const std::string& model) const {
  Counts c;
  for (const auto& r : rows)
    if (r.model == model) c += r.counts;
  return c;
}

const ReportRow* Report::find(const std::string& target, const std::string& model) const {
  for (const auto& r : rows)
    if (r.target == target && r.model == model) return &r;
  return nullptr;
}

Report run_ablation(const Simulator& sim, const Arm& a, const Arm& b, const std::map<std::string, int>& demos,
                    std::vector<ArmRecords>* records) {
  if (a.grid != b.grid)
    throw ConfigError("standardization guard: arms " + a.name + " and " + b.name +
                      " were given different (task, seed) grids");
  if (a.name == b.name) throw ConfigError("ablation arms need distinct names");
  for (const Arm* arm : {&a, &b})
    if (arm->policies.empty()) throw ConfigError("arm " + arm->name + " has no policies");

  std::vector<std::string> targets;
  for (const auto& job : a.grid)
    if (std::find(targets.begin(), targets.end(), job.task.target_item) == targets.end())
      targets.push_back(job.task.target_item);

  Report report;
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& job : a.grid) grid.push_back({{"task", task_to_json(job.task)}, {"seed", job.seed}});
  report.seeds["grid"] = grid;

  std::vector<std::vector<ReportRow>> per_arm;
  for (const Arm* arm : {&a, &b}) {
    ArmRecords recs{arm->name, {}};
    for (Policy* p : arm->policies) recs.per_policy.push_back(rollout_batch(*p, sim, arm->grid, arm->options, arm->detector));

    nlohmann::json arm_json{{"box_source", to_string(arm->options.box_source)},
                            {"execution_horizon", arm->options.execution_horizon},
                            {"max_steps", arm->options.max_steps},
                            {"train_seeds", nlohmann::json::array()}};
    for (Policy* p : arm->policies) arm_json["train_seeds"].push_back(p->train_record().value("seed", 0ULL));
    report.seeds["arms"][arm->name] = arm_json;

    std::vector<ReportRow> rows;
    for (const auto& target : targets) {
      ReportRow row;
      row.target = target;
      row.model = arm->name;
      row.strategy = grasp_strategy(target);
      row.demos = demos.count(target) ? demos.at(target) : 0;
      std::set<int> placements;
      std::vector<double> seed_tsr;
      for (const auto& run : recs.per_policy) {
        Counts c;
        for (const auto& r : run)
          if (r.task.target_item == target) {
            c += counts_of(r);
            placements.insert(r.task.placement_id);
            row.task = std::string(to_string(r.task.family));
          }
        seed_tsr.push_back(c.tsr());
        row.counts += c;
      }
      row.positions = static_cast<int>(placements.size());
      double mean = 0.0, var = 0.0;
      for (double v : seed_tsr) mean += v / seed_tsr.size();
      for (double v : seed_tsr) var += (v - mean) * (v - mean) / seed_tsr.size();
      row.tsr_spread = std::sqrt(var);
      rows.push_back(row);
    }
    per_arm.push_back(std::move(rows));
    if (records) records->push_back(std::move(recs));
  }
  // Table order: per target, then arm.
  for (std::size_t t = 0; t < targets.size(); ++t)
    for (const auto& rows : per_arm) report.rows.push_back(rows[t]);
  return report;
}

Policy train_or_load(const Simulator& sim, const TrainConfig& config) {
  if (config.out_dir.empty()) throw ConfigError("train_or_load needs an output directory");
  const fs::path ckpt = config.out_dir / "policy.ckpt";
  if (fs::exists(ckpt)) {
    Policy p = Policy::load(ckpt);
    if (p.train_record().value("config", nlohmann::json()) == to_json(config)) return p;
  }
  return train_policy(sim, config).policy;
}

Report run_family_ablation(const Simulator& sim, const DatasetManifest& manifest, const TrainConfig& base,
                           const AblationOptions& options, const fs::path& work_dir, std::vector<ArmRecords>* records) {
  if (options.train_seeds.empty()) throw ConfigError("at least one training seed is required");
  const fs::path manifest_path = base.manifest.empty() ? manifest.root / "manifest.json" : base.manifest;
  const auto grid = make_grid(sim, manifest.family, options.episodes_per_condition, options.eval_seed, options.targets);
  std::deque<Policy> policies;
  Arm arms[2];
  for (int i = 0; i < 2; ++i) {
    const bool box = i == 1;
    arms[i].name = arm_name(box);
    arms[i].options = options.rollout;
    arms[i].detector = options.detector;
    arms[i].grid = grid;
    for (std::uint64_t seed : options.train_seeds) {
      TrainConfig c = base;
      c.seed = seed;
      c.box_conditioning = box;
      c.manifest = manifest_path;
      c.out_dir = work_dir / (arms[i].name + "_s" + std::to_string(seed));
      policies.push_back(train_or_load(sim, c));
      arms[i].policies.push_back(&policies.back());
    }
  }
  std::map<std::string, int> demos;
  for (const auto& job : grid) demos[job.task.target_item] = manifest.count_for(job.task.target_item);
  Report r = run_ablation(sim, arms[0], arms[1], demos, records);
  r.title = std::string(to_string(manifest.family)) + " ablation";
  r.seeds["train_config"] = to_json(base);
  return r;
}

Report run_fewshot(const Simulator& sim, const DatasetManifest& manifest, const TrainConfig& base,
                   const FewshotOptions& options, const fs::path& work_dir) {
  const DatasetManifest split = build_fewshot_split(manifest, options.heldout_item, options.k);
  const fs::path split_path =
      manifest.root / ("fewshot_" + options.heldout_item + "_k" + std::to_string(options.k) + ".json");
  split.save(split_path);
  DatasetManifest loaded = DatasetManifest::load(split_path);

  TrainConfig c = base;
  c.manifest = split_path;
  AblationOptions a;
  a.train_seeds = options.train_seeds;
  a.episodes_per_condition = options.episodes_per_condition;
  a.eval_seed = options.eval_seed;
  a.targets = {options.heldout_item};
  a.rollout = options.rollout;
  a.detector = options.detector;
  Report r = run_family_ablation(sim, loaded, c, a, work_dir);
  r.title = "fewshot " + options.heldout_item + " k=" + std::to_string(options.k);
  r.seeds["fewshot"] = {{"heldout_item", options.heldout_item}, {"k", options.k}};
  return r;
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "text") return ReportFormat::kText;
  if (s == "csv") return ReportFormat::kDelimited;
  if (s == "plot") return ReportFormat::kPlot;
  throw ConfigError("unknown report format: " + s + " (expected text, csv or plot)");
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const char* kCsvHeader =
    "task,target,demos,positions,strategy,model,episodes,task_successes,grasp_attempts,grasp_successes,tsr,gsr,"
    "tsr_spread";

}  // namespace

std::string render_report(const Report& report, ReportFormat format) {
  std::ostringstream os;
  switch (format) {
    case ReportFormat::kText: {
      char line[256];
      std::snprintf(line, sizeof line, "%-10s %-22s %6s %9s %-9s %-9s %7s %7s\n", "Task", "Target", "Demos",
                    "Positions", "Strategy", "Model", "TSR(%)", "GSR(%)");
      os << line;
      for (const auto& r : report.rows) {
        const auto g = r.counts.gsr();
        std::snprintf(line, sizeof line, "%-10s %-22s %6d %9d %-9s %-9s %7s %7s\n", r.task.c_str(), r.target.c_str(),
                      r.demos, r.positions, r.strategy.c_str(), r.model.c_str(),
                      fmt("%.2f", 100.0 * r.counts.tsr()).c_str(), g ? fmt("%.2f", 100.0 * *g).c_str() : "n/a");
        os << line;
      }
      break;
    }
    case ReportFormat::kDelimited:
      os << kCsvHeader << '\n';
      for (const auto& r : report.rows) {
        const auto g = r.counts.gsr();
        os << r.task << ',' << r.target << ',' << r.demos << ',' << r.positions << ',' << r.strategy << ','
           << r.model << ',' << r.counts.episodes << ',' << r.counts.task_successes << ',' << r.counts.grasp_attempts
           << ',' << r.counts.grasp_successes << ',' << fmt("%.17g", r.counts.tsr()) << ','
           << (g ? fmt("%.17g", *g) : "") << ',' << fmt("%.17g", r.tsr_spread) << '\n';
      }
      break;
    case ReportFormat::kPlot: {
      nlohmann::json series = nlohmann::json::array();
      std::vector<std::string> models;
      for (const auto& r : report.rows)
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
      for (const char* metric : {"TSR", "GSR"})
        for (const auto& m : models) {
          nlohmann::json points = nlohmann::json::array();
          for (const auto& r : report.rows) {
            if (r.model != m) continue;
            const std::optional<double> v = std::string(metric) == "TSR" ? std::optional(r.counts.tsr()) : r.counts.gsr();
            points.push_back({{"label", r.target}, {"value", v ? nlohmann::json(*v) : nlohmann::json(nullptr)}});
          }
          series.push_back({{"metric", metric}, {"model", m}, {"points", points}});
        }
      os << nlohmann::json{{"title", report.title}, {"series", series}}.dump(2) << '\n';
      break;
    }
  }
  return os.str();
}

void emit_report(const Report& report, ReportFormat format, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report " + path.string());
  out << render_report(report, format);
  if (!out) throw IoError("failed writing report " + path.string());
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ConfigError("not a report CSV (header mismatch)");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 13) throw ConfigError("report CSV row has " + std::to_string(f.size()) + " fields");
    ReportRow r;
    r.task = f[0];
    r.target = f[1];
    r.demos = std::stoi(f[2]);
    r.positions = std::stoi(f[3]);
    r.strategy = f[4];
    r.model = f[5];
    r.counts = {std::stol(f[6]), std::stol(f[7]), std::stol(f[8]), std::stol(f[9])};
    r.tsr_spread = std::stod(f[12]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace graspdp
