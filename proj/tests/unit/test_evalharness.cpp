#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "graspdp/core/errors.hpp"
#include "graspdp/eval/ablation.hpp"
#include "graspdp/eval/metrics.hpp"
#include "tiny_policy.hpp"

namespace graspdp {
namespace {

namespace fs = std::filesystem;

EpisodeRecord fake(const std::string& target, int placement, bool success, int attempts, int successes) {
  EpisodeRecord r;
  r.task.family = TaskFamily::kPickCup;
  r.task.target_item = target;
  r.task.placement_id = placement;
  r.outcome.task_success = success;
  r.outcome.grasp_attempts = attempts;
  r.outcome.grasp_successes = successes;
  return r;
}

TEST(MetricsTest, ExactFractions) {
  std::vector<EpisodeRecord> rs;
  for (int i = 0; i < 80; ++i) rs.push_back(fake("mug", i % 8, i >= 3, 0, 0));
  rs[0].outcome.grasp_attempts = 4;
  rs[0].outcome.grasp_successes = 3;
  const MetricsReport m = compute_metrics(rs);
  EXPECT_EQ(m.total.episodes, 80);
  EXPECT_EQ(m.total.task_successes, 77);
  EXPECT_EQ(m.total.tsr(), 0.9625);
  ASSERT_TRUE(m.total.gsr().has_value());
  EXPECT_EQ(*m.total.gsr(), 0.75);
  EXPECT_EQ(m.conditions.size(), 8u);
  // Only placement 0 had any attempt.
  EXPECT_EQ(m.gsr_undefined, 7);
  EXPECT_EQ(*m.mean_gsr, 0.75);
}

TEST(MetricsTest, NoAttemptsMeansUndefinedNotZero) {
  const MetricsReport m = compute_metrics({fake("mug", 0, false, 0, 0), fake("mug", 0, false, 0, 0)});
  EXPECT_FALSE(m.total.gsr().has_value());
  EXPECT_FALSE(m.mean_gsr.has_value());
  EXPECT_EQ(m.gsr_undefined, 1);
  EXPECT_EQ(m.total.tsr(), 0.0);
  const MetricsReport empty = compute_metrics({});
  EXPECT_TRUE(empty.conditions.empty());
  EXPECT_EQ(empty.total, Counts{});
  EXPECT_EQ(empty.mean_tsr, 0.0);
}

TEST(MetricsTest, RandomRecordsAgreeWithDirectTally) {
  std::mt19937_64 gen(17);
  const std::vector<std::string> items{"mug", "glass_cup", "paper_cup"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EpisodeRecord> rs;
    const int n = std::uniform_int_distribution<int>(1, 60)(gen);
    std::map<std::pair<std::string, int>, std::array<long, 4>> oracle;
    for (int i = 0; i < n; ++i) {
      const std::string item = items[gen() % items.size()];
      const int placement = static_cast<int>(gen() % 4);
      const int attempts = static_cast<int>(gen() % 4);
      const int successes = attempts ? static_cast<int>(gen() % (attempts + 1)) : 0;
      const bool ok = gen() % 2;
      rs.push_back(fake(item, placement, ok, attempts, successes));
      auto& o = oracle[{item, placement}];
      o[0] += 1;
      o[1] += ok;
      o[2] += attempts;
      o[3] += successes;
    }
    const MetricsReport m = compute_metrics(rs);
    ASSERT_EQ(m.conditions.size(), oracle.size());
    long ep = 0, ts = 0, ga = 0, gs = 0;
    for (const auto& c : m.conditions) {
      const auto& o = oracle.at({c.key.target_item, c.key.placement_id});
      EXPECT_EQ(c.counts, (Counts{o[0], o[1], o[2], o[3]}));
      ep += o[0];
      ts += o[1];
      ga += o[2];
      gs += o[3];
    }
    EXPECT_EQ(m.total, (Counts{ep, ts, ga, gs}));
    EXPECT_LE(m.total.grasp_successes, m.total.grasp_attempts);
    EXPECT_GE(m.mean_tsr, 0.0);
    EXPECT_LE(m.mean_tsr, 1.0);
  }
}

Report sample_report() {
  Report r;
  r.title = "sample";
  r.rows.push_back({"PickCup", "mug", 100, 8, "handle", "baseline", {40, 21, 50, 22}, 0.05});
  r.rows.push_back({"PickCup", "mug", 100, 8, "handle", "boxcond", {40, 33, 41, 35}, 0.0});
  r.rows.push_back({"PickCup", "glass_cup", 100, 8, "diameter", "boxcond", {40, 0, 0, 0}, 0.0});
  return r;
}

TEST(ReportTest, CsvRoundTripAndDeterminism) {
  const Report r = sample_report();
  const std::string csv = render_report(r, ReportFormat::kDelimited);
  EXPECT_EQ(csv, render_report(r, ReportFormat::kDelimited));
  EXPECT_EQ(parse_report_csv(csv), r.rows);
  EXPECT_NE(csv.find("glass_cup,100,8,diameter,boxcond,40,0,0,0,0,,0"), std::string::npos);
  const std::string text = render_report(r, ReportFormat::kText);
  EXPECT_NE(text.find("n/a"), std::string::npos);
  EXPECT_NE(text.find("52.50"), std::string::npos);  // 21 / 40
  const auto plot = nlohmann::json::parse(render_report(r, ReportFormat::kPlot));
  EXPECT_EQ(plot["series"].size(), 4u);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::kDelimited);
  EXPECT_THROW(parse_report_format("xml"), ConfigError);
  EXPECT_THROW(parse_report_csv("a,b\n"), ConfigError);
}

TEST(ReportTest, EmptyReportIsHeaderOnly) {
  const Report r;
  const std::string csv = render_report(r, ReportFormat::kDelimited);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
  EXPECT_TRUE(parse_report_csv(csv).empty());
  const std::string text = render_report(r, ReportFormat::kText);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  const fs::path p = fs::temp_directory_path() / "graspdp_eval_empty" / "r.csv";
  emit_report(r, ReportFormat::kDelimited, p);
  std::ifstream in(p);
  std::string back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(back, csv);
  fs::remove_all(p.parent_path());
}

class HarnessTest : public ::testing::Test {
 protected:
  static RolloutOptions quick() {
    RolloutOptions o;
    o.max_steps = 30;
    return o;
  }
  Simulator sim_;
};

TEST_F(HarnessTest, GridBookkeeping) {
  const auto grid = make_grid(sim_, TaskFamily::kPickBig, 5, 3);
  const auto& fc = sim_.catalog().families.at(TaskFamily::kPickBig);
  ASSERT_EQ(grid.size(), fc.protocol.size() * 5);
  std::set<std::uint64_t> seeds;
  std::map<int, int> per_placement;
  for (const auto& j : grid) {
    seeds.insert(j.seed);
    ++per_placement[j.task.placement_id];
    EXPECT_EQ(j.task.target_item, "block_big");
  }
  EXPECT_EQ(seeds.size(), grid.size());
  EXPECT_EQ(per_placement.size(), fc.placements.size());
  for (const auto& [p, n] : per_placement) EXPECT_EQ(n, 5);
  EXPECT_EQ(make_grid(sim_, TaskFamily::kPickBig, 5, 3), grid);
  EXPECT_NE(make_grid(sim_, TaskFamily::kPickBig, 5, 4), grid);
  EXPECT_TRUE(make_grid(sim_, TaskFamily::kPickBig, 0, 3).empty());
  EXPECT_THROW(make_grid(sim_, TaskFamily::kPickBig, 1, 3, {"mug"}), ConfigError);

  // Prompted grids carry the target's box.
  for (const auto& j : make_grid(sim_, TaskFamily::kPickGoods, 1, 3)) EXPECT_TRUE(j.task.prompt_box.has_value());

  // Both arms run every episode once per training seed.
  Policy a = tiny_policy(sim_, 1), b = tiny_policy(sim_, 2, false);
  Arm x{"baseline", {&b}, nullptr, quick(), grid};
  Arm y{"boxcond", {&a}, nullptr, quick(), grid};
  std::vector<ArmRecords> records;
  const Report r = run_ablation(sim_, x, y, {{"block_big", 100}}, &records);
  ASSERT_EQ(records.size(), 2u);
  std::size_t total = 0;
  for (const auto& arm : records)
    for (const auto& run : arm.per_policy) total += run.size();
  EXPECT_EQ(total, 2 * grid.size());
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].model, "baseline");
  EXPECT_EQ(r.rows[1].model, "boxcond");
  EXPECT_EQ(r.rows[0].counts.episodes, static_cast<long>(grid.size()));
  EXPECT_EQ(r.rows[0].positions, static_cast<int>(fc.placements.size()));
  EXPECT_EQ(r.rows[0].demos, 100);
  EXPECT_EQ(r.seeds["grid"].size(), grid.size());
}

TEST_F(HarnessTest, StandardizationGuardRejectsDifferentGrids) {
  Policy p = tiny_policy(sim_, 1);
  Arm x{"baseline", {&p}, nullptr, quick(), make_grid(sim_, TaskFamily::kPickBig, 1, 3)};
  Arm y{"boxcond", {&p}, nullptr, quick(), make_grid(sim_, TaskFamily::kPickBig, 1, 4)};
  EXPECT_THROW(run_ablation(sim_, x, y, {}), ConfigError);
  y.grid = x.grid;
  y.grid.pop_back();
  EXPECT_THROW(run_ablation(sim_, x, y, {}), ConfigError);
  y.grid = x.grid;
  y.name = "baseline";
  EXPECT_THROW(run_ablation(sim_, x, y, {}), ConfigError);
}

TEST_F(HarnessTest, IdenticalCheckpointsGiveZeroDeltas) {
  Policy p = tiny_policy(sim_, 5);
  Policy q = p;
  const auto grid = make_grid(sim_, TaskFamily::kPickCup, 1, 8);
  Arm x{"baseline", {&p}, nullptr, quick(), grid};
  Arm y{"boxcond", {&q}, nullptr, quick(), grid};
  std::vector<ArmRecords> records;
  const Report r = run_ablation(sim_, x, y, {}, &records);
  EXPECT_EQ(records[0].per_policy, records[1].per_policy);
  for (std::size_t i = 0; i < r.rows.size(); i += 2) {
    EXPECT_EQ(r.rows[i].target, r.rows[i + 1].target);
    EXPECT_EQ(r.rows[i].counts, r.rows[i + 1].counts);
  }
  EXPECT_EQ(r.model_total("baseline"), r.model_total("boxcond"));
}

TEST_F(HarnessTest, BatchedRolloutsReproduceAndReplay) {
  Policy p = tiny_policy(sim_, 3);
  const auto grid = make_grid(sim_, TaskFamily::kPickBig, 1, 21);
  RolloutOptions o = quick();
  o.max_steps = 40;
  o.execution_horizon = 5;
  const auto batch = rollout_batch(p, sim_, grid, o);
  ASSERT_EQ(batch.size(), grid.size());
  EXPECT_EQ(rollout_batch(p, sim_, grid, o), batch);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_EQ(batch[i].frames.size(), batch[i].actions.size());
    const WorldState end = replay(sim_, batch[i]);
    EXPECT_EQ(outcome_from(sim_, end), batch[i].outcome);
    EXPECT_EQ(end.events, batch[i].events);
    // A different batch composition changes GEMM blocking, so only the
    // first chunk is compared, to float rounding.
    const EpisodeRecord single = rollout(p, sim_, grid[i].task, grid[i].seed, o);
    for (int k = 0; k < o.execution_horizon; ++k) {
      EXPECT_NEAR(batch[i].actions[k].x, single.actions[k].x, 1e-5);
      EXPECT_NEAR(batch[i].actions[k].y, single.actions[k].y, 1e-5);
      EXPECT_NEAR(batch[i].actions[k].z, single.actions[k].z, 1e-5);
      EXPECT_NEAR(batch[i].actions[k].width, single.actions[k].width, 1e-5);
    }
  }
}

TEST_F(HarnessTest, PromptModeBypassesDetectionVerbatim) {
  Policy p = tiny_policy(sim_, 4);
  const auto grid = make_grid(sim_, TaskFamily::kPickGoods, 1, 2);
  RolloutOptions o = quick();
  o.box_source = BoxSource::kPrompt;
  const auto recs = rollout_batch(p, sim_, grid, o);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (const auto& f : recs[i].frames) EXPECT_EQ(f.conditioning, grid[i].task.prompt_box);

  // Detection noise settings cannot reach a prompted rollout.
  RolloutOptions noisy = o;
  noisy.corruption.center_sigma = 6.0;
  noisy.corruption.dropout_prob = 0.5;
  EXPECT_EQ(rollout_batch(p, sim_, grid, noisy), recs);

  auto bare = grid;
  bare[0].task.prompt_box.reset();
  EXPECT_THROW(rollout_batch(p, sim_, bare, o), PreconditionError);
  o.box_source = BoxSource::kTrained;
  EXPECT_THROW(rollout_batch(p, sim_, grid, o), ConfigError);
}

TEST_F(HarnessTest, ZeroStepBudgetGivesEmptyEpisodes) {
  Policy p = tiny_policy(sim_, 4);
  RolloutOptions o = quick();
  o.max_steps = 0;
  const auto grid = make_grid(sim_, TaskFamily::kPickBig, 1, 2);
  for (const auto& r : rollout_batch(p, sim_, grid, o)) {
    EXPECT_TRUE(r.actions.empty());
    EXPECT_EQ(r.outcome.grasp_attempts, 0);
    EXPECT_FALSE(r.outcome.task_success);
  }
  const MetricsReport m = compute_metrics(rollout_batch(p, sim_, grid, o));
  EXPECT_FALSE(m.total.gsr().has_value());
}

TEST_F(HarnessTest, SeedManifestReplaysTheReport) {
  Policy p = tiny_policy(sim_, 6), q = tiny_policy(sim_, 7, false);
  const auto grid = make_grid(sim_, TaskFamily::kPickCup, 1, 12);
  Arm x{"baseline", {&q}, nullptr, quick(), grid};
  Arm y{"boxcond", {&p}, nullptr, quick(), grid};
  const Report first = run_ablation(sim_, x, y, {});
  std::vector<RolloutJob> back;
  for (const auto& j : first.seeds["grid"]) back.push_back({task_from_json(j["task"]), j["seed"].get<std::uint64_t>()});
  EXPECT_EQ(back, grid);
  x.grid = y.grid = back;
  const Report again = run_ablation(sim_, x, y, {});
  EXPECT_EQ(render_report(again, ReportFormat::kDelimited), render_report(first, ReportFormat::kDelimited));
}

}  // namespace
}  // namespace graspdp
