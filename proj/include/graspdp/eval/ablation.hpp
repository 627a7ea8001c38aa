#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspdp/demo/dataset.hpp"
#include "graspdp/eval/metrics.hpp"
#include "graspdp/eval/rollout.hpp"
#include "graspdp/policy/trainer.hpp"

namespace graspdp {

// Evaluation grid over a family's main protocol conditions (few-shot items
// excluded unless listed in `targets`). Prompted families get the target's
// ground-truth box as prompt.
std::vector<RolloutJob> make_grid(const Simulator& sim, TaskFamily family, int episodes_per_condition,
                                  std::uint64_t seed, const std::vector<std::string>& targets = {});

// Grasp strategy label of an item ("handle", "wall", "diameter").
std::string grasp_strategy(const std::string& item_id);

struct Arm {
  std::string name;
  std::vector<Policy*> policies;  // one per training seed
  const Detector* detector = nullptr;
  RolloutOptions options;
  std::vector<RolloutJob> grid;
};

struct ReportRow {
  std::string task;
  std::string target;
  int demos = 0;
  int positions = 0;
  std::string strategy;
  std::string model;
  Counts counts;           // pooled over placements and training seeds
  double tsr_spread = 0.0;  // std of TSR across training seeds
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct Report {
  std::string title;
  std::vector<ReportRow> rows;
  nlohmann::json seeds = nlohmann::json::object();  // replay manifest
  // Pooled counts of one model over all rows.
  Counts model_total(const std::string& model) const;
  const ReportRow* find(const std::string& target, const std::string& model) const;
};

struct ArmRecords {
  std::string name;
  std::vector<std::vector<EpisodeRecord>> per_policy;
};

// Runs every policy of both arms on the shared grid. Throws ConfigError
// (standardization guard) unless both arms present identical (task, seed)
// grids.
Report run_ablation(const Simulator& sim, const Arm& a, const Arm& b, const std::map<std::string, int>& demos,
                    std::vector<ArmRecords>* records = nullptr);

// Loads <out_dir>/policy.ckpt when it was trained with the same config,
// otherwise trains and writes it.
Policy train_or_load(const Simulator& sim, const TrainConfig& config);

struct AblationOptions {
  std::vector<std::uint64_t> train_seeds{0};
  int episodes_per_condition = 5;
  std::uint64_t eval_seed = 7;
  std::vector<std::string> targets;  // empty: the family's main targets
  RolloutOptions rollout;
  const Detector* detector = nullptr;  // for the trained box source
};

// Trains (or loads) both arms on `manifest` from `base` under
// <work_dir>/<arm>_s<seed> and compares them on one shared grid.
Report run_family_ablation(const Simulator& sim, const DatasetManifest& manifest, const TrainConfig& base,
                           const AblationOptions& options, const std::filesystem::path& work_dir,
                           std::vector<ArmRecords>* records = nullptr);

struct FewshotOptions {
  std::string heldout_item;
  int k = 10;
  std::vector<std::uint64_t> train_seeds{0};
  int episodes_per_condition = 40;
  std::uint64_t eval_seed = 7;
  RolloutOptions rollout;
  const Detector* detector = nullptr;
};

// Builds the k-shot split of `manifest`, trains (or loads) both arms from
// `base` under <work_dir>/<arm>_s<seed>, and evaluates on the held-out item
// only.
Report run_fewshot(const Simulator& sim, const DatasetManifest& manifest, const TrainConfig& base,
                   const FewshotOptions& options, const std::filesystem::path& work_dir);

enum class ReportFormat { kText, kDelimited, kPlot };
ReportFormat parse_report_format(const std::string& s);  // "text", "csv", "plot"

std::string render_report(const Report& report, ReportFormat format);
void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path);
// Reads back the delimited form.
std::vector<ReportRow> parse_report_csv(const std::string& text);

}  // namespace graspdp
