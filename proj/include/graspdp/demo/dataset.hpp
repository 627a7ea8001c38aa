#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graspdp/demo/episode.hpp"
#include "graspdp/demo/expert.hpp"

namespace graspdp {

struct ManifestEpisode {
  std::string episode_id;
  std::string file;  // relative to the manifest directory
  std::string target_item;
  int placement_id = 0;
  friend bool operator==(const ManifestEpisode&, const ManifestEpisode&) = default;
};

struct FewshotInfo {
  std::string heldout_item;
  int k = 0;
  friend bool operator==(const FewshotInfo&, const FewshotInfo&) = default;
};

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  TaskFamily family = TaskFamily::kPickBig;
  std::vector<DemoCondition> conditions;  // counts of stored episodes
  std::vector<ManifestEpisode> episodes;
  std::optional<FewshotInfo> fewshot;
  std::string box_provenance = "oracle";
  std::string normalization_stats;  // relative path, empty until written
  bool views_stored = true;
  std::uint64_t seed = 0;
  std::filesystem::path root;  // directory holding the manifest; not serialized

  std::filesystem::path episode_path(const ManifestEpisode& e) const { return root / e.file; }
  // Episode count per (target, placement), recomputed from `episodes`.
  std::vector<DemoCondition> tally() const;
  int count_for(const std::string& target_item) const;

  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct GenerateOptions {
  // When set, every protocol condition uses this count instead of the
  // catalog protocol count.
  std::optional<int> count_per_condition;
  int divisor = 1;  // desk-scale reduction of main protocol counts; few-shot items keep theirs
  std::uint64_t seed = 0;
  bool store_views = true;
  int max_steps = 200;
  double max_failure_rate = 0.05;
  ExpertConfig expert;
};

// Runs the scripted expert from reset(task, seed) until success or max_steps.
// Throws ExpertFailure when the episode does not succeed.
EpisodeRecord generate_episode(const Simulator& sim, const TaskSpec& task, std::uint64_t seed,
                               const GenerateOptions& options, const std::string& episode_id);

// Task for a demonstration condition; prompted families get the target's
// ground-truth view-0 box as their prompt.
TaskSpec demo_task(const Simulator& sim, TaskFamily family, const DemoCondition& condition, std::uint64_t seed);

DatasetManifest generate_dataset(const Simulator& sim, TaskFamily family, const GenerateOptions& options,
                                 const std::filesystem::path& out_dir);

// Base set without `heldout_item` plus its first k episodes.
DatasetManifest build_fewshot_split(const DatasetManifest& manifest, const std::string& heldout_item, int k);

}  // namespace graspdp
