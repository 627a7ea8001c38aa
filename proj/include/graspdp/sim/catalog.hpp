#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "graspdp/sim/world.hpp"

namespace graspdp {

// One demonstration condition of a collection protocol.
struct DemoCondition {
  std::string target_item;
  int placement_id = 0;
  int count = 0;
  friend bool operator==(const DemoCondition&, const DemoCondition&) = default;
};

struct FamilyCatalog {
  TaskFamily family = TaskFamily::kPickBig;
  // Items present in every scene, in slot order. Empty means the scene holds
  // the target item alone in slot 0.
  std::vector<std::string> scene_items;
  std::vector<std::string> targets;
  std::vector<std::vector<Vec2>> placements;  // [placement_id][slot]
  Rect target_zone;
  double jitter = 0.01;
  std::vector<DemoCondition> protocol;
  // Few-shot items; their demonstrations are the ones build_fewshot_split trims.
  std::vector<std::string> fewshot_items;
  // Prompted families condition on the target's box drawn at reset instead of
  // on per-frame detections.
  bool prompted = false;
  friend bool operator==(const FamilyCatalog&, const FamilyCatalog&) = default;
};

struct SceneCatalog {
  SimConfig sim;
  std::map<std::string, ItemSpec> items;
  std::map<TaskFamily, FamilyCatalog> families;
  int category_count = 11;  // includes category 0 = unknown
  friend bool operator==(const SceneCatalog&, const SceneCatalog&) = default;

  const ItemSpec& item(const std::string& id) const;
  const FamilyCatalog& family(TaskFamily f) const;

  // Built-in desk-scale catalog; identical to config/scenes.json.
  static SceneCatalog standard();
  static SceneCatalog load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Throws ConfigError on any invariant violation (extents, grasp regions,
  // placements inside the workspace, protocol references).
  void validate() const;
};

}  // namespace graspdp
