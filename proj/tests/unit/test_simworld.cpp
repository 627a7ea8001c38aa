#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"
#include "graspdp/sim/simulator.hpp"
#include "oracles.hpp"

namespace graspdp {
namespace {

using oracle::oracle_inside;

class SimWorldTest : public ::testing::Test {
 protected:
  Simulator sim;
  const SimConfig& cfg() const { return sim.config(); }

  // Gripper parked exactly above the target grasp region center.
  WorldState over_target(const WorldState& s, double z) {
    WorldState out = s;
    const Vec2 c = grasp_region_world(*out.find(out.task.target_item)).center();
    out.gripper.position = {c.x, c.y, z};
    return out;
  }
};

TEST_F(SimWorldTest, ResetIsDeterministic) {
  const TaskSpec task = sim.make_task(TaskFamily::kPickBig, 0);
  EXPECT_EQ(sim.reset(task, 7), sim.reset(task, 7));
  EXPECT_NE(sim.reset(task, 7), sim.reset(task, 8));
}

TEST_F(SimWorldTest, PickBigHasTwoScaledBlocks) {
  for (int p = 0; p < 8; ++p) {
    const WorldState s = sim.reset(sim.make_task(TaskFamily::kPickBig, p), 3);
    ASSERT_EQ(s.items.size(), 2u);
    const auto& big = s.items[0].spec;
    const auto& small = s.items[1].spec;
    EXPECT_EQ(big.category, small.category);
    EXPECT_EQ(big.shape, small.shape);
    EXPECT_NEAR(big.extent.x / small.extent.x, 1.4, 1e-12);
    EXPECT_NEAR(big.extent.y / small.extent.y, 1.4, 1e-12);
    EXPECT_EQ(s.task.target_item, "block_big");
  }
}

TEST_F(SimWorldTest, PickGoodsIsAFixedRowOfFour) {
  const WorldState a = sim.reset(sim.make_task(TaskFamily::kPickGoods, 0, "biscuit"), 1);
  const WorldState b = sim.reset(sim.make_task(TaskFamily::kPickGoods, 0, "biscuit"), 99);
  ASSERT_EQ(a.items.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.items[i].pose, b.items[i].pose);  // no jitter
    EXPECT_EQ(a.items[i].pose.y, a.items[0].pose.y);
    if (i > 0) EXPECT_GT(a.items[i].pose.x, a.items[i - 1].pose.x);
  }
}

TEST_F(SimWorldTest, JitterIsBounded) {
  const auto& fam = sim.catalog().family(TaskFamily::kPickCup);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const WorldState s = sim.reset(sim.make_task(TaskFamily::kPickCup, 2, "grey_mug"), seed);
    EXPECT_LE(std::abs(s.items[0].pose.x - fam.placements[2][0].x), 0.01 + 1e-12);
    EXPECT_LE(std::abs(s.items[0].pose.y - fam.placements[2][0].y), 0.01 + 1e-12);
  }
}

TEST_F(SimWorldTest, InvalidTasksAreRejected) {
  EXPECT_THROW(sim.make_task(TaskFamily::kPickBig, 8), InvalidTaskError);
  EXPECT_THROW(sim.make_task(TaskFamily::kPickCup, 4, "grey_mug"), InvalidTaskError);
  EXPECT_THROW(sim.make_task(TaskFamily::kPickGoods, 1, "biscuit"), InvalidTaskError);
  EXPECT_THROW(sim.make_task(TaskFamily::kPickCup, 0, "block_big"), InvalidTaskError);
  EXPECT_THROW(parse_family("PickAll"), InvalidTaskError);
  TaskSpec task = sim.make_task(TaskFamily::kPickBig, 0);
  task.placement_id = -1;
  EXPECT_THROW(sim.reset(task, 0), InvalidTaskError);
}

TEST_F(SimWorldTest, HoldingStillIsAFixedPoint) {
  const WorldState s = sim.reset(sim.make_task(TaskFamily::kPickBig, 0), 7);
  const auto& g = s.gripper.position;
  const WorldState next = sim.step(s, {g.x, g.y, g.z, s.gripper.width});
  WorldState expected = s;
  expected.step_count = s.step_count + 1;
  EXPECT_EQ(next, expected);
}

TEST_F(SimWorldTest, NonFiniteActionIsRejected) {
  const WorldState s = sim.reset(sim.make_task(TaskFamily::kPickBig, 0), 7);
  EXPECT_THROW(sim.step(s, {std::nan(""), 0, 0, 0}), InvalidActionError);
  EXPECT_THROW(sim.step(s, {0, 0, INFINITY, 0}), InvalidActionError);
}

TEST_F(SimWorldTest, CloseOverTargetCenterGrasps) {
  const WorldState s0 = over_target(sim.reset(sim.make_task(TaskFamily::kPickBig, 3), 5), 0.01);
  const auto& p = s0.gripper.position;
  const double g_width = s0.find("block_big")->spec.grasp_region.width;
  // Analytically: region contains the center, z = 0.01 <= z_grasp and the
  // commanded width equals the region width, so the predicate holds.
  WorldState s = s0;
  s.gripper.commanded_width = g_width;
  ASSERT_TRUE(grasp_success_predicate(s, *s.find("block_big"), cfg()));
  s = s0;
  for (int i = 0; i < 4; ++i) s = sim.step(s, {p.x, p.y, p.z, g_width});
  ASSERT_TRUE(s.gripper.holding.has_value());
  EXPECT_EQ(*s.gripper.holding, "block_big");
  ASSERT_EQ(s.events.size(), 1u);
  EXPECT_TRUE(s.events[0].on_target);
  EXPECT_TRUE(s.find("block_big")->ever_grasped);
}

TEST_F(SimWorldTest, CloseOverEmptyTableRecordsAFailedAttempt) {
  WorldState s = sim.reset(sim.make_task(TaskFamily::kPickBig, 0), 5);
  s.gripper.position = {0.25, -0.25, 0.01};
  for (int i = 0; i < 5; ++i) s = sim.step(s, {0.25, -0.25, 0.01, 0.0});
  EXPECT_FALSE(s.gripper.holding.has_value());
  ASSERT_EQ(s.events.size(), 1u);
  EXPECT_FALSE(s.events[0].item_id.has_value());
  EXPECT_FALSE(s.events[0].on_target);
}

TEST_F(SimWorldTest, GraspingTheWrongItemIsNotOnTarget) {
  WorldState s = sim.reset(sim.make_task(TaskFamily::kPickBig, 0), 5);
  const PlacedItem& small = *s.find("block_small");
  const Vec2 c = grasp_region_world(small).center();
  s.gripper.position = {c.x, c.y, 0.01};
  for (int i = 0; i < 4; ++i) s = sim.step(s, {c.x, c.y, 0.01, 0.02});
  ASSERT_EQ(s.events.size(), 1u);
  EXPECT_EQ(s.events[0].item_id, std::optional<std::string>("block_small"));
  EXPECT_FALSE(s.events[0].on_target);
}

TEST_F(SimWorldTest, PredicateAtCenterAndFarOffset) {
  WorldState s = over_target(sim.reset(sim.make_task(TaskFamily::kPickCup, 1, "grey_mug"), 2), 0.0);
  const PlacedItem& mug = *s.find("grey_mug");
  s.gripper.commanded_width = mug.spec.grasp_region.width;
  EXPECT_TRUE(grasp_success_predicate(s, mug, cfg()));
  s.gripper.position.x += 2.0 * mug.spec.grasp_region.width / 2.0 * 2.0;
  EXPECT_FALSE(grasp_success_predicate(s, mug, cfg()));
}

TEST_F(SimWorldTest, PredicateMatchesBruteForceOracle) {
  Rng rng(1234);
  const TaskFamily families[] = {TaskFamily::kPickBig, TaskFamily::kPickCup, TaskFamily::kPickGoods};
  int agreements = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const TaskFamily fam = families[trial % 3];
    const auto& fc = sim.catalog().family(fam);
    const std::string target = fc.targets[rng.below(fc.targets.size())];
    const int placement = static_cast<int>(rng.below(fc.placements.size()));
    WorldState s = sim.reset(sim.make_task(fam, placement, target), rng.next_u64());
    const PlacedItem& item = s.items[rng.below(s.items.size())];
    const Vec2 c = grasp_region_world(item).center();
    // Sample near the region so both outcomes are common.
    s.gripper.position = {c.x + rng.uniform(-0.05, 0.05), c.y + rng.uniform(-0.05, 0.05), rng.uniform(0.0, 0.04)};
    s.gripper.commanded_width = rng.uniform(0.0, 0.1);
    const bool oracle = oracle_inside({s.gripper.position.x, s.gripper.position.y}, item) &&
                        s.gripper.position.z <= cfg().z_grasp &&
                        s.gripper.commanded_width <= item.spec.grasp_region.width + cfg().w_tol;
    agreements += grasp_success_predicate(s, item, cfg()) == oracle;
  }
  EXPECT_EQ(agreements, 10000);
}

TEST_F(SimWorldTest, TaskSuccessCases) {
  const WorldState s0 = sim.reset(sim.make_task(TaskFamily::kPickBig, 0), 1);
  const Vec2 zone = s0.task.target_zone.center();
  {
    WorldState s = s0;
    s.find("block_big")->pose = zone;
    s.find("block_big")->ever_grasped = true;
    EXPECT_TRUE(sim.task_success(s));
    s.gripper.holding = "block_big";
    EXPECT_FALSE(sim.task_success(s));  // still held
  }
  {
    WorldState s = s0;
    s.find("block_small")->pose = zone;
    s.find("block_small")->ever_grasped = true;
    EXPECT_FALSE(sim.task_success(s));  // wrong item
  }
  {
    WorldState s = s0;
    s.find("block_big")->pose = {-0.25, 0.25};
    s.find("block_big")->ever_grasped = true;
    EXPECT_FALSE(sim.task_success(s));  // dropped outside
  }
  {
    WorldState s = s0;
    s.find("block_big")->pose = zone;  // never grasped
    EXPECT_FALSE(sim.task_success(s));
  }
}

TEST_F(SimWorldTest, FullPickAndPlaceByHand) {
  WorldState s = sim.reset(sim.make_task(TaskFamily::kPickBig, 2), 11);
  const Vec2 c = grasp_region_world(*s.find("block_big")).center();
  const Vec2 zone = s.task.target_zone.center();
  const double gw = s.find("block_big")->spec.grasp_region.width;
  auto drive = [&](ActionCommand a, int n) {
    for (int i = 0; i < n; ++i) s = sim.step(s, a);
  };
  drive({c.x, c.y, 0.1, 0.1}, 30);
  drive({c.x, c.y, 0.01, 0.1}, 10);
  drive({c.x, c.y, 0.01, gw}, 5);
  drive({c.x, c.y, 0.1, gw}, 10);
  drive({zone.x, zone.y, 0.1, gw}, 40);
  EXPECT_FALSE(sim.task_success(s));
  drive({zone.x, zone.y, 0.1, 0.1}, 5);
  EXPECT_TRUE(sim.task_success(s));
}

TEST_F(SimWorldTest, AttachDetachAlternateAndWorkspaceClosure) {
  Rng rng(99);
  for (int ep = 0; ep < 50; ++ep) {
    WorldState s = sim.reset(sim.make_task(TaskFamily::kPickGoods, 0, "tissue_pack"), rng.next_u64());
    bool was_holding = false;
    int transitions = 0;
    for (int t = 0; t < 150; ++t) {
      // Bias toward the items so grasps actually happen.
      const PlacedItem& it = s.items[rng.below(s.items.size())];
      const Vec2 c = grasp_region_world(it).center();
      const ActionCommand a = rng.uniform() < 0.5
                                  ? ActionCommand{c.x, c.y, rng.uniform(-0.1, 0.05), rng.uniform(-0.05, 0.15)}
                                  : ActionCommand{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                                                  rng.uniform(-1, 1)};
      s = sim.step(s, a);
      const bool holding = s.gripper.holding.has_value();
      if (holding != was_holding) ++transitions;
      was_holding = holding;
      const double h = cfg().workspace_half;
      EXPECT_LE(std::abs(s.gripper.position.x), h);
      EXPECT_LE(std::abs(s.gripper.position.y), h);
      EXPECT_GE(s.gripper.position.z, 0.0);
      EXPECT_LE(s.gripper.position.z, cfg().z_max);
      EXPECT_GE(s.gripper.width, 0.0);
      EXPECT_LE(s.gripper.width, cfg().width_max);
      for (const auto& item : s.items) {
        EXPECT_LE(std::abs(item.pose.x), h);
        EXPECT_LE(std::abs(item.pose.y), h);
      }
    }
    const int attaches =
        static_cast<int>(std::count_if(s.events.begin(), s.events.end(), [](const GraspEvent& e) { return e.item_id.has_value(); }));
    // Every attach is followed by a detach except possibly the last one.
    EXPECT_EQ(transitions, 2 * attaches - (was_holding ? 1 : 0));
  }
}

TEST_F(SimWorldTest, ReplayIsBitIdentical) {
  Rng rng(5);
  std::vector<ActionCommand> actions;
  for (int i = 0; i < 120; ++i)
    actions.push_back({rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0, 0.2), rng.uniform(0, 0.1)});
  const TaskSpec task = sim.make_task(TaskFamily::kPickCup, 3, "red_paper_cup");
  auto run = [&] {
    std::vector<WorldState> traj{sim.reset(task, 42)};
    for (const auto& a : actions) traj.push_back(sim.step(traj.back(), a));
    return traj;
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a, b);
  EXPECT_EQ(sim.render(a.back(), sim.camera(1)), sim.render(b.back(), sim.camera(1)));
}

TEST_F(SimWorldTest, RenderShapesAndDeterminism) {
  const WorldState s = sim.reset(sim.make_task(TaskFamily::kPickGoods, 0, "biscuit"), 0);
  for (const auto& cam : sim.cameras()) {
    const Image a = sim.render(s, cam);
    EXPECT_EQ(a.width, 96);
    EXPECT_EQ(a.height, 96);
    EXPECT_EQ(a.pixels.size(), 96u * 96u * 3u);
    EXPECT_EQ(a, sim.render(s, cam));
  }
  EXPECT_EQ(sim.cameras().size(), 2u);
}

// Centroid of pixels painted in the item color.
Vec2 blob_centroid(const Image& img, const std::uint8_t* color) {
  double sx = 0, sy = 0, n = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto* px = img.at(x, y);
      if (px[0] == color[0] && px[1] == color[1] && px[2] == color[2]) {
        sx += x + 0.5;
        sy += y + 0.5;
        n += 1;
      }
    }
  return n > 0 ? Vec2{sx / n, sy / n} : Vec2{-1, -1};
}

TEST_F(SimWorldTest, RenderedBlobFollowsTheItem) {
  WorldState s = sim.reset(sim.make_task(TaskFamily::kPickCup, 3, "red_paper_cup"), 0);
  s.items[0].pose = {0.0, 0.0};
  s.gripper.position = {0.25, 0.25, 0.15};
  const CameraModel& cam = sim.camera(0);
  const Image before = sim.render(s, cam);
  const std::uint8_t* center_px = before.at(48, 48);
  EXPECT_NE(center_px[0] + center_px[1] + center_px[2], 0);
  const std::uint8_t color[3] = {center_px[0], center_px[1], center_px[2]};
  const Vec2 c0 = blob_centroid(before, color);
  EXPECT_NEAR(c0.x, 48.0, 1.0);
  EXPECT_NEAR(c0.y, 48.0, 1.0);
  s.items[0].pose.x += 10.0 / cam.linear[0];  // 10 px to the right
  const Vec2 c1 = blob_centroid(sim.render(s, cam), color);
  EXPECT_NEAR(c1.x - c0.x, 10.0, 1.0);
  EXPECT_NEAR(c1.y - c0.y, 0.0, 1.0);
}

TEST_F(SimWorldTest, GroundTruthBoxSymmetryAndLinearity) {
  WorldState s = sim.reset(sim.make_task(TaskFamily::kPickCup, 3, "red_paper_cup"), 0);
  s.items[0].pose = {0.0, 0.0};
  const CameraModel& cam = sim.camera(0);
  auto boxes = sim.groundtruth_boxes(s, cam);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_DOUBLE_EQ(boxes[0].cx, cam.width / 2.0);
  EXPECT_DOUBLE_EQ(boxes[0].cy, cam.height / 2.0);
  EXPECT_EQ(boxes[0].category, s.items[0].spec.category);
  EXPECT_EQ(boxes[0].confidence, 1.0);
  const double w = boxes[0].w;
  s.items[0].spec.grasp_region.width *= 2.0;
  EXPECT_NEAR(sim.groundtruth_boxes(s, cam)[0].w, 2.0 * w, 1e-12);
}

TEST_F(SimWorldTest, OnlyGraspableItemsGetBoxes) {
  const WorldState s = sim.reset(sim.make_task(TaskFamily::kPickBig, 0), 0);
  const auto boxes = sim.groundtruth_boxes(s, sim.camera(0));
  ASSERT_EQ(boxes.size(), 1u);
  const Vec2 px = sim.camera(0).to_pixel(grasp_region_world(*s.find("block_big")).center());
  EXPECT_DOUBLE_EQ(boxes[0].cx, px.x);
  EXPECT_EQ(sim.groundtruth_boxes(sim.reset(sim.make_task(TaskFamily::kPickGoods, 0, "biscuit"), 0), sim.camera(0)).size(),
            4u);
}

TEST_F(SimWorldTest, GroundTruthBoxesMatchCornerOracleAndRoundTrip) {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    WorldState s = sim.reset(sim.make_task(TaskFamily::kPickGoods, 0, "candy_tube"), 0);
    for (auto& item : s.items) item.pose = {rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25)};
    for (const auto& cam : sim.cameras()) {
      const auto boxes = sim.groundtruth_boxes(s, cam);
      ASSERT_EQ(boxes.size(), s.items.size());
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        const Rect r = grasp_region_world(s.items[i]);
        double u0 = 1e9, u1 = -1e9, v0 = 1e9, v1 = -1e9;
        for (const Vec2 corner : {Vec2{r.x_min, r.y_min}, Vec2{r.x_max, r.y_min}, Vec2{r.x_min, r.y_max},
                                  Vec2{r.x_max, r.y_max}}) {
          const double u = cam.linear[0] * corner.x + cam.linear[1] * corner.y + cam.offset.x;
          const double v = cam.linear[2] * corner.x + cam.linear[3] * corner.y + cam.offset.y;
          u0 = std::min(u0, u);
          u1 = std::max(u1, u);
          v0 = std::min(v0, v);
          v1 = std::max(v1, v);
        }
        EXPECT_NEAR(boxes[i].cx, (u0 + u1) / 2, 0.5);
        EXPECT_NEAR(boxes[i].cy, (v0 + v1) / 2, 0.5);
        EXPECT_NEAR(boxes[i].w, u1 - u0, 0.5);
        EXPECT_NEAR(boxes[i].h, v1 - v0, 0.5);
        const Vec2 back = cam.to_world({boxes[i].cx, boxes[i].cy});
        EXPECT_NEAR(back.x, r.center().x, 1e-9);
        EXPECT_NEAR(back.y, r.center().y, 1e-9);
      }
    }
  }
}

TEST_F(SimWorldTest, CamerasAreInvertibleAndCoverTheWorkspace) {
  const double h = cfg().workspace_half;
  for (const auto& cam : sim.cameras()) {
    EXPECT_GT(std::abs(cam.determinant()), 1e-6);
    for (const Vec2 corner : {Vec2{-h, -h}, Vec2{h, h}, Vec2{-h, h}, Vec2{h, -h}}) {
      const Vec2 px = cam.to_pixel(corner);
      EXPECT_GE(px.x, 0.0);
      EXPECT_LE(px.x, cam.width);
      EXPECT_GE(px.y, 0.0);
      EXPECT_LE(px.y, cam.height);
    }
  }
}

TEST(SceneCatalogTest, ShippedConfigMatchesStandardCatalog) {
  const auto path = std::filesystem::path(GRASPDP_SOURCE_DIR) / "config" / "scenes.json";
  EXPECT_EQ(SceneCatalog::load(path), SceneCatalog::standard());
}

TEST(SceneCatalogTest, SaveLoadRoundTripAndValidation) {
  const auto path = std::filesystem::temp_directory_path() / "graspdp_catalog_roundtrip.json";
  SceneCatalog c = SceneCatalog::standard();
  c.sim.view_count = 3;
  c.save(path);
  EXPECT_EQ(SceneCatalog::load(path), c);
  c.items["grey_mug"].grasp_region.offset_x = 0.09;
  EXPECT_THROW(c.validate(), ConfigError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace graspdp
