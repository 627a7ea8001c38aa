#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "graspdp/core/errors.hpp"
#include "graspdp/serve/codec.hpp"
#include "graspdp/serve/server.hpp"
#include "graspdp/serve/service.hpp"
#include "tiny_policy.hpp"

namespace graspdp {
namespace {

using nlohmann::json;

TEST(CodecTest, Base64RoundTripAndRejectsGarbage) {
  std::vector<std::uint8_t> bytes(256);
  for (int i = 0; i < 256; ++i) bytes[i] = static_cast<std::uint8_t>(i);
  const std::string text = base64_encode(bytes.data(), bytes.size());
  EXPECT_EQ(base64_decode(text), bytes);
  EXPECT_EQ(base64_encode(reinterpret_cast<const std::uint8_t*>("Man"), 3), "TWFu");
  EXPECT_EQ(base64_encode(reinterpret_cast<const std::uint8_t*>("Ma"), 2), "TWE=");
  try {
    base64_decode("@@@@");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field, "data");
  }
}

TEST(CodecTest, ImagePayloadIsLosslessWithDeclaredDims) {
  Image img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  const json j = image_to_json(img);
  EXPECT_EQ(j["width"], 5);
  EXPECT_EQ(j["height"], 3);
  EXPECT_EQ(j["channels"], 3);
  EXPECT_EQ(image_from_json(j), img);
  json bad = j;
  bad["width"] = 6;
  EXPECT_THROW(image_from_json(bad), ValidationError);
  bad = j;
  bad.erase("data");
  try {
    image_from_json(bad);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field, "data");
  }
}

TEST(CodecTest, BoxObjects) {
  const GraspBox b{3, 10.5, 20.25, 4, 5, 0.5};
  EXPECT_EQ(box_from_object(box_object(b)), b);
  const GraspBox d = box_from_object(json{{"cx", 1}, {"cy", 2}, {"w", 3}, {"h", 4}});
  EXPECT_EQ(d.confidence, 1.0);
  EXPECT_EQ(d.category, 0);
  try {
    box_from_object(json{{"cx", 1}, {"cy", 2}, {"w", 3}});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field, "h");
  }
}

class PromptServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceConfig c;
    c.max_steps = 24;
    service_ = std::make_unique<PromptService>(sim_, c);
    service_->add_policy("tiny", policy_);
  }

  GraspBox item_box(const std::string& session, const std::string& item) const {
    const json scene = service_->scene(session);
    for (const auto& it : scene["world"]["items"])
      if (it["item_id"] == item) return box_from_object(it["grasp_box"]);
    throw std::runtime_error("item not in scene: " + item);
  }

  Simulator sim_;
  Policy policy_ = tiny_policy(sim_, 11);
  std::unique_ptr<PromptService> service_;
};

TEST_F(PromptServiceTest, SessionDefaultsAndValidation) {
  const json s = service_->create_session(json::object());
  EXPECT_EQ(s["task"]["family"], "PickGoods");
  EXPECT_EQ(s["checkpoint"], "tiny");
  auto field_of = [&](const json& body) {
    try {
      service_->create_session(body);
    } catch (const ValidationError& e) {
      return e.field;
    }
    return std::string("none");
  };
  EXPECT_EQ(field_of({{"family", "PickNothing"}}), "family");
  EXPECT_EQ(field_of({{"placement_id", 99}}), "placement_id");
  EXPECT_EQ(field_of({{"target_item", "anvil"}}), "target_item");
  EXPECT_EQ(field_of({{"checkpoint", "missing"}}), "checkpoint");
  EXPECT_EQ(field_of({{"seed", -1}}), "seed");
  EXPECT_EQ(field_of({{"execution_horizon", 17}}), "execution_horizon");
  EXPECT_THROW(service_->scene("nope"), NotFoundError);
}

TEST_F(PromptServiceTest, SceneMatchesTheSimulatorReset) {
  const json s = service_->create_session({{"family", "PickGoods"}, {"placement_id", 0}, {"seed", 9}});
  const std::string id = s["session_id"];
  const json scene = service_->scene(id);
  const TaskSpec task = sim_.make_task(TaskFamily::kPickGoods, 0, s["task"]["target_item"]);
  const WorldState state = sim_.reset(task, 9);
  const auto views = sim_.render_all(state);
  ASSERT_EQ(scene["views"].size(), views.size());
  for (std::size_t v = 0; v < views.size(); ++v) EXPECT_EQ(image_from_json(scene["views"][v]), views[v]);
  EXPECT_EQ(scene["box_source"], "groundtruth");
  EXPECT_EQ(scene["boxes"].size(), sim_.groundtruth_boxes(state, sim_.camera(0)).size());
  EXPECT_EQ(scene["world"]["items"].size(), state.items.size());
  EXPECT_EQ(scene["rollout_status"], "idle");
  EXPECT_EQ(service_->scene(id), scene);
}

TEST_F(PromptServiceTest, PromptValidationNamesTheField) {
  const std::string id = service_->create_session(json::object())["session_id"];
  auto field_of = [&](const json& box) {
    try {
      service_->post_prompt(id, {{"box", box}});
    } catch (const ValidationError& e) {
      return e.field;
    }
    return std::string("none");
  };
  EXPECT_EQ(field_of({{"cx", 96}, {"cy", 10}, {"w", 4}, {"h", 4}}), "cx");
  EXPECT_EQ(field_of({{"cx", 5}, {"cy", -1}, {"w", 4}, {"h", 4}}), "cy");
  EXPECT_EQ(field_of({{"cx", 5}, {"cy", 5}, {"w", 0}, {"h", 4}}), "w");
  EXPECT_EQ(field_of({{"cx", 5}, {"cy", 5}, {"w", 3}, {"h", 4}, {"category", 11}}), "category");
  EXPECT_EQ(field_of({{"cx", 5}, {"cy", 5}, {"w", 3}}), "h");
  EXPECT_THROW(service_->post_prompt(id, json::object()), ValidationError);
  // Rejected prompts leave no trace.
  EXPECT_TRUE(service_->history(id)["prompts"].empty());
  EXPECT_THROW(service_->start_rollout(id, json::object()), PreconditionError);
}

TEST_F(PromptServiceTest, RolloutEqualsTheHeadlessEvaluationPath) {
  const std::string id = service_->create_session({{"seed", 4}})["session_id"];
  const GraspBox box = item_box(id, "biscuit");
  service_->post_prompt(id, {{"box", box_object(box)}});
  const TaskSpec task = service_->prompted_task(id);
  EXPECT_EQ(task.target_item, "biscuit");
  EXPECT_EQ(task.prompt_box, box);

  const json started = service_->start_rollout(id, json::object());
  EXPECT_EQ(started["status"], "running");
  const std::string rid = started["rollout_id"];
  service_->wait_idle(id);

  Policy copy = policy_;
  const EpisodeRecord expected = rollout(copy, sim_, task, 4, service_->rollout_options(id));
  const auto got = service_->rollout_record(id, rid);
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(*got, expected);
  for (const auto& f : got->frames) EXPECT_EQ(f.conditioning, box);

  const json r = service_->rollout(id, rid);
  EXPECT_EQ(r["status"], "done");
  EXPECT_EQ(r["frame_count"], expected.frames.size());
  EXPECT_EQ(r["outcome"]["grasp_attempts"], expected.outcome.grasp_attempts);
  EXPECT_EQ(image_from_json(r["frames"][0]["views"][1]), expected.frames[0].views[1]);
  const json tail = service_->rollout(id, rid, 5, false);
  EXPECT_EQ(tail["frames"].size(), expected.frames.size() - 5);
  EXPECT_EQ(tail["frames"][0]["index"], 5);
  EXPECT_FALSE(tail["frames"][0].contains("views"));
  EXPECT_THROW(service_->rollout(id, "r9"), NotFoundError);
}

TEST_F(PromptServiceTest, SecondRolloutWhileRunningIsBusy) {
  const std::string id = service_->create_session({{"max_steps", 200}})["session_id"];
  service_->post_prompt(id, {{"box", box_object(item_box(id, "biscuit"))}});
  service_->start_rollout(id, json::object());
  EXPECT_THROW(service_->start_rollout(id, json::object()), BusyError);
  EXPECT_EQ(service_->scene(id)["rollout_status"], "running");
  service_->wait_idle(id);
  EXPECT_NO_THROW(service_->start_rollout(id, json::object()));
  service_->wait_idle(id);
}

TEST_F(PromptServiceTest, HistoryIsAppendOnlyAndTalliesFollowIt) {
  const std::string id = service_->create_session(json::object())["session_id"];
  const char* items[] = {"biscuit", "candy_tube", "biscuit"};
  long attempts = 0, successes = 0, wins = 0;
  for (const char* item : items) {
    service_->post_prompt(id, {{"box", box_object(item_box(id, item))}});
    const std::string rid = service_->start_rollout(id, json::object())["rollout_id"];
    service_->wait_idle(id);
    const auto rec = *service_->rollout_record(id, rid);
    attempts += rec.outcome.grasp_attempts;
    successes += rec.outcome.grasp_successes;
    wins += rec.outcome.task_success;
    const json h = service_->history(id);
    EXPECT_EQ(h["prompts"].back()["rollouts"].size(), 1u);
  }
  const json h = service_->history(id);
  ASSERT_EQ(h["prompts"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(h["prompts"][i]["index"], i);
  EXPECT_EQ(h["tallies"]["rollouts"], 3);
  EXPECT_EQ(h["tallies"]["grasp_attempts"], attempts);
  EXPECT_EQ(h["tallies"]["grasp_successes"], successes);
  EXPECT_EQ(h["tallies"]["task_successes"], wins);
  EXPECT_EQ(h["active_prompt"], h["prompts"][2]["box"]);
  // Only the latest rollout keeps its pixels.
  EXPECT_TRUE(service_->rollout_record(id, "r1")->frames[0].views.empty());
  EXPECT_FALSE(service_->rollout_record(id, "r3")->frames[0].views.empty());
}

TEST_F(PromptServiceTest, SessionsAreIsolated) {
  const std::string a = service_->create_session({{"seed", 1}})["session_id"];
  const std::string b = service_->create_session({{"seed", 2}})["session_id"];
  EXPECT_NE(a, b);
  service_->post_prompt(a, {{"box", box_object(item_box(a, "candy_tube"))}});
  EXPECT_TRUE(service_->history(b)["prompts"].empty());
  EXPECT_THROW(service_->start_rollout(b, json::object()), PreconditionError);
  service_->post_prompt(b, {{"box", box_object(item_box(b, "biscuit"))}});

  const std::string ra = service_->start_rollout(a, json::object())["rollout_id"];
  const std::string rb = service_->start_rollout(b, json::object())["rollout_id"];
  service_->wait_idle(a);
  service_->wait_idle(b);
  Policy copy = policy_;
  EXPECT_EQ(*service_->rollout_record(a, ra), rollout(copy, sim_, service_->prompted_task(a), 1, service_->rollout_options(a)));
  EXPECT_EQ(*service_->rollout_record(b, rb), rollout(copy, sim_, service_->prompted_task(b), 2, service_->rollout_options(b)));
  EXPECT_EQ(service_->history(a)["prompts"].size(), 1u);
  EXPECT_EQ(service_->history(b)["prompts"].size(), 1u);
}

class PromptServerTest : public PromptServiceTest {
 protected:
  void SetUp() override {
    PromptServiceTest::SetUp();
    server_ = std::make_unique<PromptServer>(*service_);
    port_ = server_->bind_any("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
  }

  httplib::Result post(httplib::Client& c, const std::string& path, const json& body) {
    return c.Post(path, body.dump(), "application/json");
  }

  std::unique_ptr<PromptServer> server_;
  int port_ = 0;
  std::thread thread_;
};

TEST_F(PromptServerTest, EndToEndFlowAndStatusCodes) {
  httplib::Client c("127.0.0.1", port_);
  auto res = c.Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");

  res = post(c, "/session", {{"seed", 4}});
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  const std::string id = json::parse(res->body)["session_id"];

  res = c.Get("/session/" + id + "/scene");
  ASSERT_EQ(res->status, 200);
  const json scene = json::parse(res->body);
  EXPECT_EQ(image_from_json(scene["views"][0]).width, 96);

  res = post(c, "/session/" + id + "/rollout", json::object());
  EXPECT_EQ(res->status, 412);
  res = post(c, "/session/" + id + "/prompt", {{"box", {{"cx", 200}, {"cy", 5}, {"w", 3}, {"h", 3}}}});
  EXPECT_EQ(res->status, 422);
  EXPECT_EQ(json::parse(res->body)["field"], "cx");
  res = c.Post("/session/" + id + "/prompt", "{not json", "application/json");
  EXPECT_EQ(res->status, 400);
  res = c.Get("/session/zzz/scene");
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body)["error"], "not_found");

  json target;
  for (const auto& it : scene["world"]["items"])
    if (it["item_id"] == "biscuit") target = it["grasp_box"];
  res = post(c, "/session/" + id + "/prompt", {{"box", target}});
  ASSERT_EQ(res->status, 200);
  res = post(c, "/session/" + id + "/rollout", json::object());
  ASSERT_EQ(res->status, 202);
  const std::string rid = json::parse(res->body)["rollout_id"];
  EXPECT_EQ(post(c, "/session/" + id + "/rollout", json::object())->status, 409);

  json r;
  for (int i = 0; i < 600; ++i) {
    res = c.Get("/session/" + id + "/rollout/" + rid + "?images=false");
    ASSERT_EQ(res->status, 200);
    r = json::parse(res->body);
    if (r["status"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ASSERT_EQ(r["status"], "done");
  EXPECT_EQ(c.Get("/session/" + id + "/rollout/" + rid + "?since=x")->status, 422);
  res = c.Get("/session/" + id + "/rollout/" + rid + "?since=3");
  const json tail = json::parse(res->body);
  EXPECT_EQ(tail["frames"][0]["index"], 3);
  const auto rec = *service_->rollout_record(id, rid);
  EXPECT_EQ(image_from_json(tail["frames"][0]["views"][0]), rec.frames[3].views[0]);

  res = c.Get("/session/" + id + "/history");
  ASSERT_EQ(res->status, 200);
  const json h = json::parse(res->body);
  EXPECT_EQ(h["prompts"].size(), 1u);
  EXPECT_EQ(h["prompts"][0]["rollouts"][0]["rollout_id"], rid);
  EXPECT_EQ(c.Get("/nowhere")->status, 404);
}

}  // namespace
}  // namespace graspdp
