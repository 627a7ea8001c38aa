#include "graspdp/det/detector.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <torch/torch.h>

#include "graspdp/core/errors.hpp"
#include "graspdp/core/rng.hpp"
#include "graspdp/det/oracle.hpp"
#include "graspdp/io/container.hpp"

namespace graspdp {

using nlohmann::json;
namespace F = torch::nn::functional;

namespace {
constexpr int kStride = 4;
constexpr char kMagic[] = "GDPDET";
}  // namespace

class DetectorNet : public torch::nn::Module {
 public:
  explicit DetectorNet(const DetectorConfig& c) {
    const int ch = c.channels;
    conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, ch / 2, 3).stride(2).padding(1)));
    conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch / 2, ch, 3).stride(2).padding(1)));
    conv3 = register_module("conv3", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3).padding(1)));
    conv4 = register_module("conv4", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3).padding(2).dilation(2)));
    norm1 = register_module("norm1", torch::nn::GroupNorm(4, ch / 2));
    norm2 = register_module("norm2", torch::nn::GroupNorm(8, ch));
    norm3 = register_module("norm3", torch::nn::GroupNorm(8, ch));
    norm4 = register_module("norm4", torch::nn::GroupNorm(8, ch));
    head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, 5 + c.category_count, 1)));
  }

  // [B, 3, H, W] in [0, 1] -> [B, 5 + C, H/4, W/4]
  torch::Tensor forward(torch::Tensor x) {
    x = torch::relu(norm1(conv1(x)));
    x = torch::relu(norm2(conv2(x)));
    x = torch::relu(norm3(conv3(x)));
    x = x + torch::relu(norm4(conv4(x)));
    return head(x);
  }

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr}, conv4{nullptr}, head{nullptr};
  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr}, norm3{nullptr}, norm4{nullptr};
};

json to_json(const DetectorConfig& c) {
  return {{"image_width", c.image_width}, {"image_height", c.image_height}, {"category_count", c.category_count},
          {"channels", c.channels},       {"candidates", c.candidates},     {"steps", c.steps},
          {"batch_size", c.batch_size},   {"lr", c.lr},                     {"seed", c.seed}};
}

DetectorConfig detector_config_from_json(const json& j) {
  DetectorConfig c;
  c.image_width = j.value("image_width", c.image_width);
  c.image_height = j.value("image_height", c.image_height);
  c.category_count = j.value("category_count", c.category_count);
  c.channels = j.value("channels", c.channels);
  c.candidates = j.value("candidates", c.candidates);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  if (c.channels < 2 || c.candidates < 1 || c.category_count < 2 || c.batch_size < 1)
    throw ConfigError("detector config has non-positive sizes");
  if (c.image_width % kStride != 0 || c.image_height % kStride != 0)
    throw ConfigError("detector image dims must be multiples of 4");
  return c;
}

Detector::Detector(const DetectorConfig& config) : config_(config) {
  torch::manual_seed(config.seed);
  net_ = std::make_unique<DetectorNet>(config);
}

Detector::Detector(const Detector& other) : Detector(other.config_) {
  metadata_ = other.metadata_;
  torch::NoGradGuard ng;
  auto dst = net_->parameters();
  auto src = other.net_->parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i]);
}

Detector& Detector::operator=(const Detector& other) {
  if (this != &other) *this = Detector(other);
  return *this;
}

Detector::Detector(Detector&&) noexcept = default;
Detector& Detector::operator=(Detector&&) noexcept = default;
Detector::~Detector() = default;

namespace {

torch::Tensor images_to_tensor(const std::vector<const Image*>& images, int width, int height) {
  auto t = torch::empty({static_cast<long>(images.size()), height, width, 3}, torch::kUInt8);
  auto* dst = t.data_ptr<std::uint8_t>();
  for (const Image* img : images) {
    if (img->width != width || img->height != height)
      throw ShapeError("detector expects " + std::to_string(width) + "x" + std::to_string(height) + " images, got " +
                       std::to_string(img->width) + "x" + std::to_string(img->height));
    dst = std::copy(img->pixels.begin(), img->pixels.end(), dst);
  }
  return t.permute({0, 3, 1, 2}).to(torch::kFloat32).div_(255.0);
}

std::vector<std::vector<GraspBox>> decode(const torch::Tensor& out, const DetectorConfig& c) {
  const long B = out.size(0), gh = out.size(2), gw = out.size(3);
  const auto obj = torch::sigmoid(out.select(1, 0));
  const auto peaks = obj * (obj == F::max_pool2d(obj.unsqueeze(1), F::MaxPool2dFuncOptions(3).stride(1).padding(1))
                                       .squeeze(1))
                              .to(torch::kFloat32);
  const int k = std::min<long>(c.candidates, gh * gw);
  const auto [scores, idx] = peaks.view({B, -1}).topk(k, 1);
  const auto cls = out.slice(1, 5, 5 + c.category_count).argmax(1).view({B, -1});
  const auto reg = out.slice(1, 1, 5).reshape({B, 4, -1});
  auto scores_a = scores.accessor<float, 2>();
  auto idx_a = idx.accessor<long, 2>();
  auto cls_a = cls.accessor<long, 2>();
  auto reg_a = reg.accessor<float, 3>();
  std::vector<std::vector<GraspBox>> result(B);
  for (long b = 0; b < B; ++b) {
    for (int i = 0; i < k; ++i) {
      const long cell = idx_a[b][i];
      const long gy = cell / gw, gx = cell % gw;
      GraspBox box;
      box.category = static_cast<int>(cls_a[b][cell]);
      box.cx = (gx + 0.5 + reg_a[b][0][cell]) * kStride;
      box.cy = (gy + 0.5 + reg_a[b][1][cell]) * kStride;
      box.w = std::exp(std::clamp<double>(reg_a[b][2][cell], -6.0, 4.0)) * kStride;
      box.h = std::exp(std::clamp<double>(reg_a[b][3][cell], -6.0, 4.0)) * kStride;
      box.confidence = scores_a[b][i];
      result[b].push_back(clamp_box(box, c.image_width, c.image_height));
    }
  }
  return result;
}

}  // namespace

std::vector<std::vector<GraspBox>> Detector::detect_batch(const std::vector<const Image*>& images) const {
  if (images.empty()) return {};
  torch::NoGradGuard ng;
  net_->eval();
  return decode(net_->forward(images_to_tensor(images, config_.image_width, config_.image_height)), config_);
}

std::vector<GraspBox> Detector::detect(const Image& image) const { return detect_batch({&image}).front(); }

void Detector::save(const std::filesystem::path& path) const {
  torch::serialize::OutputArchive archive;
  net_->save(archive);
  std::ostringstream os;
  archive.save_to(os);
  write_container(path, kMagic, {kDetectorFormatVersion, {{"config", to_json(config_)}, {"metadata", metadata_}}, os.str()});
}

Detector Detector::load(const std::filesystem::path& path) {
  const Container c = read_container(path, kMagic, kDetectorFormatVersion);
  Detector d(detector_config_from_json(c.meta.at("config")));
  d.metadata_ = c.meta.value("metadata", json::object());
  try {
    torch::serialize::InputArchive archive;
    std::istringstream is(c.payload);
    archive.load_from(is);
    d.net_->load(archive);
  } catch (const c10::Error& e) {
    throw CheckpointError(path.string() + ": corrupt detector weights: " + e.what_without_backtrace());
  } catch (const std::runtime_error& e) {
    throw CheckpointError(path.string() + ": corrupt detector weights: " + e.what());
  }
  return d;
}

Detector train_detector(const std::vector<LabeledFrame>& frames, const DetectorConfig& config) {
  if (frames.size() < 2) throw ConfigError("detector training needs at least two labeled frames");
  Detector det(config);
  DetectorNet& net = det.net();
  const int gw = config.image_width / kStride, gh = config.image_height / kStride;

  std::set<int> seen;
  for (const auto& f : frames)
    for (const auto& b : f.boxes) {
      if (b.category < 0 || b.category >= config.category_count)
        throw ConfigError("label category " + std::to_string(b.category) + " is outside the detector's range");
      seen.insert(b.category);
    }
  json warnings = json::array();
  for (int c = 1; c < config.category_count; ++c)
    if (!seen.count(c)) warnings.push_back("category " + std::to_string(c) + " is absent from the training set");

  std::vector<const Image*> all;
  for (const auto& f : frames) all.push_back(&f.image);
  // Padded with the border colour so random crops emulate translations.
  constexpr int kPad = 8;
  const auto images = F::pad(images_to_tensor(all, config.image_width, config.image_height),
                             F::PadFuncOptions({kPad, kPad, kPad, kPad}).mode(torch::kReplicate));

  torch::optim::Adam opt(net.parameters(), torch::optim::AdamOptions(config.lr));
  Rng rng(mix_seed({config.seed, 0x646574ULL}));
  net.train();
  double last_loss = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    // Cosine decay to 5% of the base rate.
    const double lr = config.lr * (0.05 + 0.95 * 0.5 * (1 + std::cos(M_PI * step / config.steps)));
    for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);

    std::vector<torch::Tensor> crops;
    auto obj_t = torch::zeros({config.batch_size, gh, gw});
    std::vector<long> pb, py, px, pc;
    std::vector<float> reg;
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& frame = frames[rng.below(frames.size())];
      const long f = &frame - frames.data();
      const int sx = static_cast<int>(rng.below(2 * kPad + 1)) - kPad;
      const int sy = static_cast<int>(rng.below(2 * kPad + 1)) - kPad;
      crops.push_back(images[f]
                          .slice(1, kPad - sy, kPad - sy + config.image_height)
                          .slice(2, kPad - sx, kPad - sx + config.image_width));
      for (GraspBox box : frame.boxes) {
        box.cx += sx;
        box.cy += sy;
        if (box.cx < 0 || box.cy < 0 || box.cx >= config.image_width || box.cy >= config.image_height) continue;
        // Grid-space center; cell (i, j) has its center at (j + 0.5, i + 0.5).
        const double gx = box.cx / kStride, gy = box.cy / kStride;
        const long cx = std::clamp<long>(static_cast<long>(gx), 0, gw - 1);
        const long cy = std::clamp<long>(static_cast<long>(gy), 0, gh - 1);
        // Soft objectness peak, and regression/class supervision on the 3x3
        // neighbourhood so an off-by-one peak still decodes to the right box.
        for (long y = std::max(0L, cy - 1); y <= std::min<long>(gh - 1, cy + 1); ++y)
          for (long x = std::max(0L, cx - 1); x <= std::min<long>(gw - 1, cx + 1); ++x) {
            const double d2 = std::pow(x + 0.5 - gx, 2) + std::pow(y + 0.5 - gy, 2);
            const float t = x == cx && y == cy ? 1.0f : static_cast<float>(std::exp(-d2 / (2 * 0.6 * 0.6)));
            obj_t[b][y][x] = std::max(obj_t[b][y][x].item<float>(), t);
            pb.push_back(b);
            py.push_back(y);
            px.push_back(x);
            pc.push_back(box.category);
            reg.insert(reg.end(), {static_cast<float>(gx - (x + 0.5)), static_cast<float>(gy - (y + 0.5)),
                                   static_cast<float>(std::log(box.w / kStride)),
                                   static_cast<float>(std::log(box.h / kStride))});
          }
      }
    }
    const auto out = net.forward(torch::stack(crops));
    auto loss = F::binary_cross_entropy_with_logits(
        out.select(1, 0), obj_t,
        F::BinaryCrossEntropyWithLogitsFuncOptions().pos_weight(torch::tensor({20.0f})));
    if (!pb.empty()) {
      const auto bi = torch::tensor(pb), yi = torch::tensor(py), xi = torch::tensor(px);
      // [P, 5 + C] rows at the positive cells
      const auto rows = out.permute({0, 2, 3, 1}).index({bi, yi, xi});
      const auto reg_t = torch::tensor(reg).view({-1, 4});
      loss = loss + F::cross_entropy(rows.slice(1, 5), torch::tensor(pc)) +
             5.0 * F::smooth_l1_loss(rows.slice(1, 1, 5), reg_t, F::SmoothL1LossFuncOptions().beta(0.1));
    }
    opt.zero_grad();
    loss.backward();
    opt.step();
    last_loss = loss.item<double>();
  }
  det.metadata() = {{"steps", config.steps},
                    {"final_loss", last_loss},
                    {"train_frames", frames.size()},
                    {"warnings", warnings}};
  return det;
}

MapResult evaluate_map(const Detector& detector, const std::vector<LabeledFrame>& testset, double iou_threshold) {
  if (testset.empty()) throw ShapeError("mAP needs a non-empty test set");
  std::vector<std::vector<GraspBox>> preds, truth;
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < testset.size(); i += kChunk) {
    std::vector<const Image*> batch;
    for (std::size_t j = i; j < std::min(testset.size(), i + kChunk); ++j) batch.push_back(&testset[j].image);
    for (auto& p : detector.detect_batch(batch)) preds.push_back(std::move(p));
  }
  for (const auto& f : testset) truth.push_back(f.boxes);
  return mean_average_precision(preds, truth, iou_threshold);
}

std::vector<LabeledFrame> sample_labeled_frames(const Simulator& sim, int count, std::uint64_t seed) {
  const TaskFamily families[] = {TaskFamily::kPickBig, TaskFamily::kPickCup, TaskFamily::kPickGoods};
  Rng rng(mix_seed({seed, 0x6c6162ULL}));
  GenerateOptions opts;
  opts.store_views = false;
  std::vector<LabeledFrame> out;
  while (static_cast<int>(out.size()) < count) {
    const TaskFamily fam = families[out.size() % 3];
    // Uniform over items and placements, so few-shot items are not starved.
    const auto& fc = sim.catalog().family(fam);
    const DemoCondition cond{fc.targets[rng.below(fc.targets.size())],
                             static_cast<int>(rng.below(fc.placements.size())), 1};
    const std::uint64_t s = rng.next_u64();
    EpisodeRecord ep;
    try {
      ep = generate_episode(sim, demo_task(sim, fam, cond, s), s, opts, "label");
    } catch (const ExpertFailure&) {
      continue;
    }
    const ObservationFrame& frame = ep.frames[rng.below(ep.frames.size())];
    out.push_back({sim.render(frame_state(sim, ep, frame), sim.camera(0)), frame.boxes});
  }
  return out;
}

DatasetManifest autolabel(const Detector& detector, const Simulator& sim, const DatasetManifest& manifest,
                          const std::filesystem::path& out_dir) {
  DatasetManifest out = manifest;
  out.root = out_dir;
  out.box_provenance = "detector";
  std::filesystem::create_directories(out_dir / "episodes");
  for (const auto& e : manifest.episodes) {
    EpisodeRecord ep = read_episode(manifest.episode_path(e), manifest.views_stored);
    std::vector<Image> view0(ep.frames.size());
    std::vector<const Image*> batch;
    for (std::size_t i = 0; i < ep.frames.size(); ++i) {
      view0[i] = ep.frames[i].views.empty() ? sim.render(frame_state(sim, ep, ep.frames[i]), sim.camera(0))
                                            : ep.frames[i].views[0];
      batch.push_back(&view0[i]);
    }
    const auto boxes = detector.detect_batch(batch);
    for (std::size_t i = 0; i < ep.frames.size(); ++i) ep.frames[i].boxes = boxes[i];
    ep.box_source = "detector";
    write_episode(out.episode_path(e), ep, manifest.views_stored);
  }
  out.save(out_dir / "manifest.json");
  return out;
}

}  // namespace graspdp
