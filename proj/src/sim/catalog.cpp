#include "graspdp/sim/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "graspdp/core/errors.hpp"

namespace graspdp {

using nlohmann::json;

namespace {

ItemSpec make_item(std::string id, int category, Shape shape, Vec2 extent, GraspRegion region,
                   bool graspable = true) {
  return ItemSpec{std::move(id), category, shape, extent, region, graspable};
}

json to_json(const Vec2& v) { return json::array({v.x, v.y}); }
Vec2 vec2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

const ItemSpec& SceneCatalog::item(const std::string& id) const {
  auto it = items.find(id);
  if (it == items.end()) throw InvalidTaskError("unknown item '" + id + "'");
  return it->second;
}

const FamilyCatalog& SceneCatalog::family(TaskFamily f) const {
  auto it = families.find(f);
  if (it == families.end()) throw InvalidTaskError("family not in catalog: " + std::string(to_string(f)));
  return it->second;
}

SceneCatalog SceneCatalog::standard() {
  SceneCatalog c;
  // Blocks differ only by a 1.4:1 scale; only the big one is annotated.
  const double big = 0.056;
  const double small = big / 1.4;
  c.items.emplace("block_big", make_item("block_big", 1, Shape::kRect, {big, big}, {0.0, 0.0, 0.04, 0.04}));
  c.items.emplace("block_small", make_item("block_small", 1, Shape::kRect, {small, small},
                                           {0.0, 0.0, 0.04 / 1.4, 0.04 / 1.4}, false));
  // Cups: handle (lateral box), wall (edge band) and diameter (centered) grasps.
  c.items.emplace("grey_mug", make_item("grey_mug", 2, Shape::kDisc, {0.08, 0.08}, {0.033, 0.0, 0.03, 0.03}));
  c.items.emplace("blue_plastic_cup",
                  make_item("blue_plastic_cup", 3, Shape::kDisc, {0.07, 0.07}, {0.0, 0.024, 0.04, 0.03}));
  c.items.emplace("red_paper_cup", make_item("red_paper_cup", 4, Shape::kDisc, {0.06, 0.06}, {0.0, 0.0, 0.056, 0.03}));
  c.items.emplace("green_mug", make_item("green_mug", 5, Shape::kDisc, {0.07, 0.07}, {-0.027, 0.0, 0.03, 0.03}));
  c.items.emplace("blue_plastic_cup_diam",
                  make_item("blue_plastic_cup_diam", 6, Shape::kDisc, {0.066, 0.066}, {0.0, 0.0, 0.05, 0.03}));
  // Retail goods, one consistent diameter grasp each.
  c.items.emplace("chocolate_bar", make_item("chocolate_bar", 7, Shape::kRect, {0.10, 0.04}, {0.0, 0.0, 0.04, 0.03}));
  c.items.emplace("biscuit", make_item("biscuit", 8, Shape::kDisc, {0.07, 0.07}, {0.0, 0.0, 0.045, 0.035}));
  c.items.emplace("candy_tube", make_item("candy_tube", 9, Shape::kRect, {0.05, 0.08}, {0.0, 0.0, 0.035, 0.04}));
  c.items.emplace("tissue_pack", make_item("tissue_pack", 10, Shape::kRect, {0.09, 0.07}, {0.0, 0.0, 0.05, 0.04}));

  {
    FamilyCatalog f;
    f.family = TaskFamily::kPickBig;
    f.scene_items = {"block_big", "block_small"};
    f.targets = {"block_big"};
    const Vec2 p0{-0.18, 0.16}, p1{0.0, 0.18}, p2{0.18, 0.16}, p3{-0.20, -0.02};
    const Vec2 p4{0.0, 0.02}, p5{0.20, 0.04}, p6{-0.18, -0.20}, p7{-0.02, -0.18};
    f.placements = {{p0, p2}, {p2, p0}, {p1, p4}, {p4, p1}, {p3, p5}, {p5, p3}, {p6, p4}, {p7, p0}};
    f.target_zone = {0.14, -0.28, 0.28, -0.14};
    f.jitter = 0.01;
    for (int p = 0; p < 8; ++p) f.protocol.push_back({"block_big", p, 75});
    c.families.emplace(f.family, f);
  }
  {
    FamilyCatalog f;
    f.family = TaskFamily::kPickCup;
    f.targets = {"grey_mug", "blue_plastic_cup", "red_paper_cup", "green_mug", "blue_plastic_cup_diam"};
    f.placements = {{{-0.15, 0.15}}, {{0.15, 0.15}}, {{0.15, -0.10}}, {{0.0, 0.02}}};
    f.target_zone = {-0.28, -0.28, -0.14, -0.14};
    f.jitter = 0.01;
    for (const char* cup : {"grey_mug", "blue_plastic_cup", "red_paper_cup"})
      for (int p = 0; p < 4; ++p) f.protocol.push_back({cup, p, 25});
    f.protocol.push_back({"green_mug", 0, 5});
    f.protocol.push_back({"blue_plastic_cup_diam", 1, 5});
    f.protocol.push_back({"blue_plastic_cup_diam", 2, 5});
    f.fewshot_items = {"green_mug", "blue_plastic_cup_diam"};
    c.families.emplace(f.family, f);
  }
  {
    FamilyCatalog f;
    f.family = TaskFamily::kPickGoods;
    f.scene_items = {"chocolate_bar", "biscuit", "candy_tube", "tissue_pack"};
    f.targets = f.scene_items;
    f.placements = {{{-0.21, 0.10}, {-0.07, 0.10}, {0.07, 0.10}, {0.21, 0.10}}};
    f.target_zone = {-0.08, -0.28, 0.08, -0.16};
    f.jitter = 0.0;
    f.prompted = true;
    for (const auto& item : f.scene_items) f.protocol.push_back({item, 0, 100});
    c.families.emplace(f.family, f);
  }
  return c;
}

void SceneCatalog::validate() const {
  const auto& s = sim;
  if (s.workspace_half <= 0 || s.z_max <= 0 || s.width_max <= 0 || s.max_step <= 0 || s.width_rate <= 0)
    throw ConfigError("sim: bounds and rates must be positive");
  if (s.close_threshold >= s.release_threshold || s.release_threshold >= s.width_max)
    throw ConfigError("sim: need close_threshold < release_threshold < width_max");
  if (s.image_width <= 0 || s.image_height <= 0 || s.view_count < 1)
    throw ConfigError("sim: image size and view count must be positive");
  for (const auto& [id, item] : items) {
    if (id != item.item_id) throw ConfigError("item key mismatch: " + id);
    if (item.extent.x <= 0 || item.extent.y <= 0) throw ConfigError(id + ": extent must be positive");
    if (item.grasp_region.width <= 0 || item.grasp_region.height <= 0)
      throw ConfigError(id + ": grasp region size must be positive");
    if (item.category <= 0 || item.category >= category_count)
      throw ConfigError(id + ": category out of range");
    const auto& r = item.grasp_region;
    const double hx = 0.6 * item.extent.x + 1e-12;  // footprint inflated by 20%
    const double hy = 0.6 * item.extent.y + 1e-12;
    if (std::abs(r.offset_x) + r.width / 2 > hx || std::abs(r.offset_y) + r.height / 2 > hy)
      throw ConfigError(id + ": grasp region exceeds the inflated footprint");
    if (r.width + s.w_tol >= s.close_threshold)
      throw ConfigError(id + ": grasp width must close past the close threshold");
  }
  for (const auto& [family, f] : families) {
    if (family != f.family) throw ConfigError("family key mismatch");
    if (f.targets.empty() || f.placements.empty()) throw ConfigError("family needs targets and placements");
    const std::size_t slots = f.scene_items.empty() ? 1 : f.scene_items.size();
    for (const auto& id : f.scene_items) (void)item(id);
    for (const auto& id : f.targets) {
      (void)item(id);
      if (!f.scene_items.empty() &&
          std::find(f.scene_items.begin(), f.scene_items.end(), id) == f.scene_items.end())
        throw ConfigError("target " + id + " is not a scene item");
    }
    for (const auto& placement : f.placements) {
      if (placement.size() != slots) throw ConfigError("placement slot count mismatch");
      for (const auto& p : placement)
        if (std::abs(p.x) + f.jitter > s.workspace_half || std::abs(p.y) + f.jitter > s.workspace_half)
          throw ConfigError("placement outside the workspace");
    }
    for (const auto& c : f.protocol) {
      if (std::find(f.targets.begin(), f.targets.end(), c.target_item) == f.targets.end())
        throw ConfigError("protocol target not in family: " + c.target_item);
      if (c.placement_id < 0 || c.placement_id >= static_cast<int>(f.placements.size()))
        throw ConfigError("protocol placement out of range");
      if (c.count < 1) throw ConfigError("protocol counts must be >= 1");
    }
  }
}

SceneCatalog SceneCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog " + path.string());
  json j;
  try {
    in >> j;
    SceneCatalog c;
    c.items.clear();
    c.families.clear();
    const auto& js = j.at("sim");
    auto& s = c.sim;
    s.workspace_half = js.at("workspace_half");
    s.z_max = js.at("z_max");
    s.width_max = js.at("width_max");
    s.z_grasp = js.at("z_grasp");
    s.w_tol = js.at("w_tol");
    s.max_step = js.at("max_step");
    s.width_rate = js.at("width_rate");
    s.close_threshold = js.at("close_threshold");
    s.release_threshold = js.at("release_threshold");
    s.jitter = js.at("jitter");
    const auto& home = js.at("home");
    s.home = {home.at(0), home.at(1), home.at(2)};
    s.image_width = js.at("image_width");
    s.image_height = js.at("image_height");
    s.view_count = js.at("view_count");
    s.oblique_deg = js.at("oblique_deg");
    c.category_count = j.at("category_count");
    for (const auto& ji : j.at("items")) {
      ItemSpec item;
      item.item_id = ji.at("id");
      item.category = ji.at("category");
      item.shape = parse_shape(ji.at("shape").get<std::string>());
      item.extent = vec2_from(ji.at("extent"));
      const auto& r = ji.at("grasp_region");
      item.grasp_region = {r.at(0), r.at(1), r.at(2), r.at(3)};
      item.graspable = ji.value("graspable", true);
      c.items.emplace(item.item_id, item);
    }
    for (const auto& [name, jf] : j.at("families").items()) {
      FamilyCatalog f;
      f.family = parse_family(name);
      f.scene_items = jf.value("scene_items", std::vector<std::string>{});
      f.targets = jf.at("targets").get<std::vector<std::string>>();
      for (const auto& jp : jf.at("placements")) {
        std::vector<Vec2> slots;
        for (const auto& p : jp) slots.push_back(vec2_from(p));
        f.placements.push_back(std::move(slots));
      }
      const auto& z = jf.at("target_zone");
      f.target_zone = {z.at(0), z.at(1), z.at(2), z.at(3)};
      f.jitter = jf.at("jitter");
      for (const auto& jc : jf.at("protocol"))
        f.protocol.push_back({jc.at("target"), jc.at("placement"), jc.at("count")});
      f.fewshot_items = jf.value("fewshot_items", std::vector<std::string>{});
      f.prompted = jf.value("prompted", false);
      c.families.emplace(f.family, std::move(f));
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError("catalog " + path.string() + ": " + e.what());
  }
}

void SceneCatalog::save(const std::filesystem::path& path) const {
  json j;
  const auto& s = sim;
  j["sim"] = {{"workspace_half", s.workspace_half},
              {"z_max", s.z_max},
              {"width_max", s.width_max},
              {"z_grasp", s.z_grasp},
              {"w_tol", s.w_tol},
              {"max_step", s.max_step},
              {"width_rate", s.width_rate},
              {"close_threshold", s.close_threshold},
              {"release_threshold", s.release_threshold},
              {"jitter", s.jitter},
              {"home", {s.home.x, s.home.y, s.home.z}},
              {"image_width", s.image_width},
              {"image_height", s.image_height},
              {"view_count", s.view_count},
              {"oblique_deg", s.oblique_deg}};
  j["category_count"] = category_count;
  j["items"] = json::array();
  for (const auto& [id, item] : items) {
    const auto& r = item.grasp_region;
    j["items"].push_back({{"id", id},
                          {"category", item.category},
                          {"shape", to_string(item.shape)},
                          {"extent", to_json(item.extent)},
                          {"grasp_region", {r.offset_x, r.offset_y, r.width, r.height}},
                          {"graspable", item.graspable}});
  }
  for (const auto& [family, f] : families) {
    json jf;
    jf["scene_items"] = f.scene_items;
    jf["targets"] = f.targets;
    jf["placements"] = json::array();
    for (const auto& placement : f.placements) {
      json jp = json::array();
      for (const auto& p : placement) jp.push_back(to_json(p));
      jf["placements"].push_back(jp);
    }
    jf["target_zone"] = {f.target_zone.x_min, f.target_zone.y_min, f.target_zone.x_max, f.target_zone.y_max};
    jf["jitter"] = f.jitter;
    jf["protocol"] = json::array();
    for (const auto& c : f.protocol)
      jf["protocol"].push_back({{"target", c.target_item}, {"placement", c.placement_id}, {"count", c.count}});
    jf["fewshot_items"] = f.fewshot_items;
    jf["prompted"] = f.prompted;
    j["families"][std::string(to_string(family))] = jf;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write catalog " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace graspdp
