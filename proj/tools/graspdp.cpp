#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "graspdp/core/errors.hpp"
#include "graspdp/det/detector.hpp"
#include "graspdp/eval/ablation.hpp"
#include "graspdp/serve/server.hpp"

using namespace graspdp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

struct Common {
  std::string scenes;
  Simulator sim() const { return scenes.empty() ? Simulator() : Simulator(SceneCatalog::load(scenes)); }
};

struct TrainArgs {
  std::string config;
  std::string manifest;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::string arm;
};

void add_train_args(CLI::App* app, TrainArgs& a) {
  app->add_option("--config", a.config, "training config JSON")->check(CLI::ExistingFile);
  app->add_option("--manifest", a.manifest, "dataset manifest");
  app->add_option("--out", a.out, "output directory");
  app->add_option("--seed", a.seed, "training seed");
  app->add_option("--steps", a.steps, "optimizer steps");
}

TrainConfig train_config(const TrainArgs& a) {
  TrainConfig c = a.config.empty() ? TrainConfig{} : train_config_from_json(read_json(a.config));
  if (!a.manifest.empty()) c.manifest = a.manifest;
  if (!a.out.empty()) c.out_dir = a.out;
  if (a.seed) c.seed = *a.seed;
  if (a.steps) c.steps = *a.steps;
  if (!a.arm.empty()) {
    if (a.arm != "baseline" && a.arm != "boxcond") throw ConfigError("--arm must be baseline or boxcond");
    c.box_conditioning = a.arm == "boxcond";
  }
  return c;
}

struct RolloutArgs {
  int k = 8;
  int max_steps = 200;
  std::string box_source = "oracle";
  double center_sigma = 0.0;
  double size_sigma = 0.0;
  double dropout = 0.0;
};

void add_rollout_args(CLI::App* app, RolloutArgs& a) {
  app->add_option("--execution-horizon", a.k, "actions executed per chunk")->check(CLI::Range(1, 16));
  app->add_option("--max-steps", a.max_steps, "step budget per episode")->check(CLI::NonNegativeNumber);
  app->add_option("--box-source", a.box_source, "oracle, trained or prompt");
  app->add_option("--center-sigma", a.center_sigma, "oracle box centre noise (px)");
  app->add_option("--size-sigma", a.size_sigma, "oracle box size noise (px)");
  app->add_option("--dropout", a.dropout, "oracle box dropout probability");
}

RolloutOptions rollout_options(const RolloutArgs& a) {
  RolloutOptions o;
  o.execution_horizon = a.k;
  o.max_steps = a.max_steps;
  o.box_source = parse_box_source(a.box_source);
  o.corruption.center_sigma = a.center_sigma;
  o.corruption.size_sigma = a.size_sigma;
  o.corruption.dropout_prob = a.dropout;
  return o;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(std::stoull(part));
  if (out.empty()) throw ConfigError("no seeds given");
  return out;
}

PromptServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Box-conditioned diffusion policy toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--scenes", common.scenes, "scene catalog JSON (default: built-in)")->check(CLI::ExistingFile);

  // demo-gen
  auto* demo = app.add_subcommand("demo-gen", "generate scripted demonstrations");
  std::string family = "PickBig", out;
  int divisor = 1;
  std::optional<int> per_condition;
  std::uint64_t seed = 0;
  bool no_views = false;
  demo->add_option("--family", family, "PickBig, PickCup or PickGoods");
  demo->add_option("--out", out, "output directory")->required();
  demo->add_option("--divisor", divisor, "divide protocol counts")->check(CLI::PositiveNumber);
  demo->add_option("--per-condition", per_condition, "fixed count per condition");
  demo->add_option("--seed", seed, "generation seed");
  demo->add_flag("--no-views", no_views, "store state only; views are re-rendered on load");

  // detector-train / detector-eval
  auto* dtrain = app.add_subcommand("detector-train", "train the grasp-box detector");
  auto* deval = app.add_subcommand("detector-eval", "mAP@0.5 of a detector on fresh frames");
  std::string det_config, det_path;
  int frames = 600, eval_frames = 200;
  std::uint64_t eval_seed = 1000;
  dtrain->add_option("--config", det_config, "detector config JSON")->check(CLI::ExistingFile);
  dtrain->add_option("--out", det_path, "checkpoint path")->required();
  dtrain->add_option("--frames", frames, "training frames")->check(CLI::PositiveNumber);
  dtrain->add_option("--seed", seed, "frame sampling seed");
  dtrain->add_option("--eval-frames", eval_frames, "held-out frames (0 to skip)");
  dtrain->add_option("--eval-seed", eval_seed, "held-out sampling seed");
  deval->add_option("--detector", det_path, "checkpoint")->required()->check(CLI::ExistingFile);
  deval->add_option("--frames", eval_frames, "test frames")->check(CLI::PositiveNumber);
  deval->add_option("--seed", eval_seed, "frame sampling seed");

  // autolabel
  auto* label = app.add_subcommand("autolabel", "replace dataset boxes with detector output");
  std::string manifest_path;
  label->add_option("--detector", det_path, "checkpoint")->required()->check(CLI::ExistingFile);
  label->add_option("--manifest", manifest_path, "source manifest")->required()->check(CLI::ExistingFile);
  label->add_option("--out", out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train one policy");
  TrainArgs targs;
  add_train_args(train, targs);
  train->add_option("--arm", targs.arm, "baseline or boxcond");

  // eval
  auto* eval = app.add_subcommand("eval", "roll out one policy on a family grid");
  std::string checkpoint, format = "text", targets;
  int episodes = 5;
  RolloutArgs rargs;
  eval->add_option("--checkpoint", checkpoint, "policy checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--family", family, "task family");
  eval->add_option("--episodes", episodes, "episodes per condition")->check(CLI::NonNegativeNumber);
  eval->add_option("--seed", eval_seed, "grid seed");
  eval->add_option("--targets", targets, "comma-separated targets (default: main targets)");
  eval->add_option("--detector", det_path, "detector for --box-source trained");
  eval->add_option("--out", out, "metrics JSON path (default stdout)");
  add_rollout_args(eval, rargs);

  // ablate / fewshot
  auto* ablate = app.add_subcommand("ablate", "train or load both arms and compare them");
  auto* fewshot = app.add_subcommand("fewshot", "k-shot transfer to a held-out item");
  TrainArgs aargs;
  std::string seeds = "0", work_dir, report_out, item;
  int k = 10;
  for (auto* sub : {ablate, fewshot}) {
    add_train_args(sub, aargs);
    sub->add_option("--train-seeds", seeds, "comma-separated training seeds");
    sub->add_option("--work-dir", work_dir, "checkpoint directory")->required();
    sub->add_option("--episodes", episodes, "episodes per condition")->check(CLI::NonNegativeNumber);
    sub->add_option("--eval-seed", eval_seed, "grid seed");
    sub->add_option("--format", format, "text, csv or plot");
    sub->add_option("--report", report_out, "report path (default stdout)");
    sub->add_option("--detector", det_path, "detector for --box-source trained");
    add_rollout_args(sub, rargs);
  }
  ablate->add_option("--targets", targets, "comma-separated targets");
  fewshot->add_option("--item", item, "held-out item")->required();
  fewshot->add_option("--k", k, "demonstrations kept")->check(CLI::NonNegativeNumber);

  // serve
  auto* serve = app.add_subcommand("serve", "run the prompt service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> policies;
  ServiceConfig scfg;
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port")->check(CLI::Range(0, 65535));
  serve->add_option("--policy", policies, "name=checkpoint (repeatable)")->required();
  serve->add_option("--detector", det_path, "detector used for scene boxes")->check(CLI::ExistingFile);
  serve->add_option("--execution-horizon", scfg.execution_horizon, "default actions per chunk")->check(CLI::Range(1, 16));
  serve->add_option("--max-steps", scfg.max_steps, "default step budget")->check(CLI::NonNegativeNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    const Simulator sim = common.sim();
    auto split = [](const std::string& s) {
      std::vector<std::string> out;
      std::stringstream ss(s);
      std::string part;
      while (std::getline(ss, part, ','))
        if (!part.empty()) out.push_back(part);
      return out;
    };
    auto load_detector = [&]() -> std::optional<Detector> {
      if (det_path.empty()) return std::nullopt;
      return Detector::load(det_path);
    };

    if (*demo) {
      GenerateOptions g;
      g.divisor = divisor;
      g.count_per_condition = per_condition;
      g.seed = seed;
      g.store_views = !no_views;
      const DatasetManifest m = generate_dataset(sim, parse_family(family), g, out);
      std::cout << "wrote " << m.episodes.size() << " episodes to " << (fs::path(out) / "manifest.json").string() << "\n";
    } else if (*dtrain) {
      DetectorConfig c = det_config.empty() ? DetectorConfig{} : detector_config_from_json(read_json(det_config));
      Detector d = train_detector(sample_labeled_frames(sim, frames, seed), c);
      if (eval_frames > 0) {
        const MapResult r = evaluate_map(d, sample_labeled_frames(sim, eval_frames, eval_seed));
        d.metadata()["heldout_map"] = r.map;
        std::cout << "held-out mAP@0.5 " << r.map << "\n";
      }
      d.save(det_path);
      std::cout << "wrote " << det_path << "\n";
    } else if (*deval) {
      const Detector d = Detector::load(det_path);
      const MapResult r = evaluate_map(d, sample_labeled_frames(sim, eval_frames, eval_seed));
      json per = json::object();
      for (const auto& [cat, ap] : r.per_category) per[std::to_string(cat)] = ap;
      std::cout << json{{"map", r.map}, {"per_category", per}, {"frames", eval_frames}}.dump(2) << "\n";
    } else if (*label) {
      const DatasetManifest m = autolabel(Detector::load(det_path), sim, DatasetManifest::load(manifest_path), out);
      std::cout << "relabelled " << m.episodes.size() << " episodes into " << out << "\n";
    } else if (*train) {
      const TrainResult r = train_policy(sim, train_config(targs));
      std::cout << "final loss " << (r.losses.empty() ? 0.0 : r.losses.back()) << ", wrote " << r.checkpoint.string()
                << "\n";
    } else if (*eval) {
      Policy p = Policy::load(checkpoint);
      const auto det = load_detector();
      const auto grid = make_grid(sim, parse_family(family), episodes, eval_seed, split(targets));
      const auto records = rollout_batch(p, sim, grid, rollout_options(rargs), det ? &*det : nullptr);
      const MetricsReport m = compute_metrics(records);
      json conds = json::array();
      for (const auto& c : m.conditions) {
        const auto g = c.counts.gsr();
        conds.push_back({{"target_item", c.key.target_item},
                         {"placement_id", c.key.placement_id},
                         {"episodes", c.counts.episodes},
                         {"task_successes", c.counts.task_successes},
                         {"grasp_attempts", c.counts.grasp_attempts},
                         {"grasp_successes", c.counts.grasp_successes},
                         {"tsr", c.counts.tsr()},
                         {"gsr", g ? json(*g) : json(nullptr)}});
      }
      const auto g = m.total.gsr();
      const json result{{"checkpoint", checkpoint},
                        {"family", family},
                        {"conditions", conds},
                        {"tsr", m.total.tsr()},
                        {"gsr", g ? json(*g) : json(nullptr)},
                        {"mean_tsr", m.mean_tsr},
                        {"gsr_undefined_conditions", m.gsr_undefined}};
      write_text(out, result.dump(2) + "\n");
    } else if (*ablate || *fewshot) {
      TrainConfig base = train_config(aargs);
      if (base.manifest.empty()) throw ConfigError("a dataset manifest is required (--manifest or config)");
      const DatasetManifest manifest = DatasetManifest::load(base.manifest);
      const auto det = load_detector();
      RolloutOptions ro = rollout_options(rargs);
      if (ro.box_source == BoxSource::kTrained && !det) throw ConfigError("--box-source trained needs --detector");
      Report report;
      if (*ablate) {
        AblationOptions o;
        o.train_seeds = parse_seeds(seeds);
        o.episodes_per_condition = episodes;
        o.eval_seed = eval_seed;
        o.targets = split(targets);
        o.rollout = ro;
        o.detector = det ? &*det : nullptr;
        report = run_family_ablation(sim, manifest, base, o, work_dir);
      } else {
        FewshotOptions o;
        o.heldout_item = item;
        o.k = k;
        o.train_seeds = parse_seeds(seeds);
        o.episodes_per_condition = episodes;
        o.eval_seed = eval_seed;
        o.rollout = ro;
        o.detector = det ? &*det : nullptr;
        report = run_fewshot(sim, manifest, base, o, work_dir);
      }
      const ReportFormat f = parse_report_format(format);
      if (report_out.empty()) {
        std::cout << render_report(report, f);
      } else {
        emit_report(report, f, report_out);
        write_text(fs::path(report_out).replace_extension(".seeds.json"), report.seeds.dump(2) + "\n");
      }
    } else if (*serve) {
      for (const auto& spec : policies) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--policy expects name=checkpoint, got " + spec);
        scfg.policies[spec.substr(0, eq)] = spec.substr(eq + 1);
      }
      if (!det_path.empty()) scfg.detector = det_path;
      PromptService service(sim, scfg);
      PromptServer server(service);
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
      });
      std::cout << "listening on http://" << host << ":" << port << std::endl;
      if (!server.listen(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << " (field " << e.field << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
