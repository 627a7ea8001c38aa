#include "graspdp/policy/policy.hpp"

#include <cmath>
#include <sstream>

#include "graspdp/core/errors.hpp"
#include "graspdp/io/container.hpp"

namespace graspdp {

namespace {
constexpr char kMagic[] = "GDPPOL";
constexpr double kGoldenTolerance = 1e-6;
}  // namespace

Policy::Policy(const EncoderConfig& encoder, const DenoiserConfig& denoiser, const Normalizer& normalizer,
               std::uint64_t init_seed)
    : encoder_config_(encoder),
      denoiser_config_(denoiser),
      schedule_(make_schedule(denoiser.train_steps)),
      normalizer_(normalizer) {
  if (encoder.token_dim != denoiser.token_dim) throw ConfigError("encoder and denoiser token dims differ");
  if (denoiser.inference_steps < 1 || denoiser.inference_steps > denoiser.train_steps)
    throw ConfigError("inference_steps must lie in [1, train_steps]");
  if (normalizer.action.dims() != kActionDim || normalizer.lowdim.dims() != static_cast<std::size_t>(encoder.lowdim_dim))
    throw ConfigError("normalizer dims do not match the policy");
  torch::manual_seed(init_seed);
  encoder_ = ObsEncoder(encoder);
  denoiser_ = Denoiser(denoiser);
}

Policy::Policy(const Policy& other)
    : encoder_config_(other.encoder_config_),
      denoiser_config_(other.denoiser_config_),
      schedule_(other.schedule_),
      normalizer_(other.normalizer_),
      train_record_(other.train_record_),
      encoder_(ObsEncoder(other.encoder_config_)),
      denoiser_(Denoiser(other.denoiser_config_)) {
  const auto src = other.parameters();
  if (!src.empty()) to(src.front().scalar_type());
  copy_weights_from(other);
  encoder_->train(other.encoder_->is_training());
  denoiser_->train(other.denoiser_->is_training());
  if (other.golden_) {
    const auto& g = *other.golden_;
    golden_ = GoldenSet{{g.obs.images.clone(), g.obs.lowdim.clone(), g.obs.box.clone()},
                        g.x_t.clone(), g.t.clone(), g.eps_hat.clone()};
  }
}

Policy& Policy::operator=(const Policy& other) {
  if (this != &other) {
    Policy copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::vector<torch::Tensor> Policy::parameters() const {
  auto p = encoder_->parameters();
  for (auto& q : denoiser_->parameters()) p.push_back(q);
  return p;
}

std::vector<std::pair<std::string, std::vector<long>>> Policy::parameter_shapes() const {
  std::vector<std::pair<std::string, std::vector<long>>> out;
  for (const auto& item : encoder_->named_parameters())
    out.emplace_back("encoder." + item.key(), item.value().sizes().vec());
  for (const auto& item : denoiser_->named_parameters())
    out.emplace_back("denoiser." + item.key(), item.value().sizes().vec());
  return out;
}

ObsBatch Policy::make_batch(const std::vector<std::vector<const ObsStep*>>& histories) const {
  const auto& c = encoder_config_;
  const long B = static_cast<long>(histories.size()), T = c.history, V = c.view_count;
  const long H = c.image_height, W = c.image_width;
  auto pixels = torch::empty({B, T, V, H, W, 3}, torch::kUInt8);
  auto lowdim = torch::empty({B, T, c.lowdim_dim}, torch::kFloat32);
  auto box = torch::empty({B, T, c.box_dim()}, torch::kFloat32);
  auto* px = pixels.data_ptr<std::uint8_t>();
  auto* ld = lowdim.data_ptr<float>();
  auto* bx = box.data_ptr<float>();
  for (const auto& h : histories) {
    if (static_cast<long>(h.size()) != T)
      throw ShapeError("policy history must hold exactly " + std::to_string(T) + " steps");
    for (const ObsStep* s : h) {
      if (static_cast<long>(s->views.size()) != V) throw ShapeError("observation has the wrong number of views");
      for (const Image& img : s->views) {
        if (img.width != W || img.height != H) throw ShapeError("observation image has the wrong dims");
        px = std::copy(img.pixels.begin(), img.pixels.end(), px);
      }
      const std::vector<double> raw{s->eef.x, s->eef.y, s->eef.z, s->gripper_width};
      for (double v : normalizer_.lowdim.normalize(raw)) *ld++ = static_cast<float>(v);
      for (float v : box_features(s->box, c.image_width, c.image_height, c.category_count)) *bx++ = v;
    }
  }
  return {pixels.permute({0, 1, 2, 5, 3, 4}).to(torch::kFloat32).div_(255.0), lowdim, box};
}

torch::Tensor Policy::encode(const ObsBatch& b) { return encoder_->forward(b.images, b.lowdim, b.box); }

torch::Tensor Policy::predict_eps(const torch::Tensor& x_t, const torch::Tensor& t, const ObsBatch& batch) {
  return denoiser_->forward(x_t, t, encode(batch));
}

torch::Tensor Policy::sample(const ObsBatch& batch, const std::vector<std::uint64_t>& seeds) {
  torch::NoGradGuard ng;
  const auto obs = encode(batch);
  return ddim_sample(denoiser_, obs, schedule_, denoiser_config_.inference_steps, denoiser_config_.eta, seeds,
                     denoiser_config_.clip_sample);
}

std::vector<ActionChunk> Policy::act(const std::vector<std::vector<const ObsStep*>>& histories,
                                     const std::vector<std::uint64_t>& seeds) {
  const auto chunk = sample(make_batch(histories), seeds).to(torch::kFloat64).contiguous();
  const auto a = chunk.accessor<double, 3>();
  std::vector<ActionChunk> out(histories.size());
  for (std::size_t b = 0; b < histories.size(); ++b)
    for (int i = 0; i < kChunkLength; ++i) {
      std::vector<double> v(kActionDim);
      for (int k = 0; k < kActionDim; ++k) v[k] = normalizer_.action.denormalize(k, a[b][i][k]);
      out[b][i] = action_from(v);
    }
  return out;
}

void Policy::set_golden(const ObsBatch& obs, std::uint64_t seed) {
  const long G = obs.images.size(0);
  auto gen = at::detail::createCPUGenerator(seed);
  GoldenSet g;
  g.obs = {obs.images.clone(), obs.lowdim.clone(), obs.box.clone()};
  g.x_t = torch::randn({G, kChunkLength, kActionDim}, gen, obs.lowdim.options());
  g.t = torch::randint(schedule_.steps, {G}, gen, torch::TensorOptions().dtype(torch::kLong));
  torch::NoGradGuard ng;
  g.eps_hat = predict_eps(g.x_t, g.t, g.obs).clone();
  golden_ = std::move(g);
}

double Policy::golden_deviation() {
  if (!golden_) return 0.0;
  torch::NoGradGuard ng;
  const auto& g = *golden_;
  return (predict_eps(g.x_t, g.t, g.obs) - g.eps_hat).abs().max().item<double>();
}

void Policy::copy_weights_from(const Policy& other) {
  torch::NoGradGuard ng;
  const auto dst = parameters();
  const auto src = other.parameters();
  if (dst.size() != src.size()) throw ShapeError("policies have different architectures");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i]);
}

void Policy::to(torch::Dtype dtype) {
  encoder_->to(dtype);
  denoiser_->to(dtype);
}

void Policy::set_training(bool on) {
  encoder_->train(on);
  denoiser_->train(on);
}

void Policy::save(const std::filesystem::path& path) const {
  torch::serialize::OutputArchive archive;
  {
    torch::serialize::OutputArchive enc, den;
    encoder_->save(enc);
    denoiser_->save(den);
    archive.write("encoder", enc);
    archive.write("denoiser", den);
  }
  if (golden_) {
    // Images go in as bytes; they were built from 8-bit pixels.
    archive.write("golden_images", golden_->obs.images.mul(255.0).round().to(torch::kUInt8));
    archive.write("golden_lowdim", golden_->obs.lowdim);
    archive.write("golden_box", golden_->obs.box);
    archive.write("golden_x_t", golden_->x_t);
    archive.write("golden_t", golden_->t);
    archive.write("golden_eps_hat", golden_->eps_hat);
  }
  std::ostringstream os;
  archive.save_to(os);
  nlohmann::json meta{{"encoder", to_json(encoder_config_)},
                      {"denoiser", to_json(denoiser_config_)},
                      {"schedule", {{"kind", "cosine"}, {"steps", schedule_.steps}, {"offset", schedule_.offset}}},
                      {"normalizer", to_json(normalizer_)},
                      {"train", train_record_},
                      {"has_golden", golden_.has_value()}};
  write_container(path, kMagic, {kPolicyFormatVersion, meta, os.str()});
}

Policy Policy::load(const std::filesystem::path& path) {
  const Container c = read_container(path, kMagic, kPolicyFormatVersion);
  try {
    Policy p(encoder_config_from_json(c.meta.at("encoder")), denoiser_config_from_json(c.meta.at("denoiser")),
             normalizer_from_json(c.meta.at("normalizer")));
    p.train_record_ = c.meta.value("train", nlohmann::json::object());
    torch::serialize::InputArchive archive;
    std::istringstream is(c.payload);
    archive.load_from(is);
    torch::serialize::InputArchive enc, den;
    archive.read("encoder", enc);
    archive.read("denoiser", den);
    p.encoder_->load(enc);
    p.denoiser_->load(den);
    if (c.meta.value("has_golden", false)) {
      GoldenSet g;
      torch::Tensor images;
      archive.read("golden_images", images);
      g.obs.images = images.to(torch::kFloat32).div(255.0);
      archive.read("golden_lowdim", g.obs.lowdim);
      archive.read("golden_box", g.obs.box);
      archive.read("golden_x_t", g.x_t);
      archive.read("golden_t", g.t);
      archive.read("golden_eps_hat", g.eps_hat);
      p.golden_ = std::move(g);
      const double dev = p.golden_deviation();
      if (!(dev <= kGoldenTolerance))
        throw CheckpointError(path.string() + ": golden windows deviate by " + std::to_string(dev) + " after loading");
    }
    return p;
  } catch (const Error&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt policy metadata: " + e.what());
  } catch (const c10::Error& e) {
    throw CheckpointError(path.string() + ": corrupt policy weights: " + e.what_without_backtrace());
  } catch (const std::exception& e) {
    throw CheckpointError(path.string() + ": corrupt policy weights: " + e.what());
  }
}

}  // namespace graspdp
