#include "graspdp/policy/encoder.hpp"

#include "graspdp/core/errors.hpp"
#include "graspdp/policy/layers.hpp"

namespace graspdp {

int EncoderConfig::view_feature_dim() const {
  int f = stem_channels;
  for (int c : stage_channels) f += c;
  return f;
}

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"view_count", c.view_count},
          {"image_width", c.image_width},
          {"image_height", c.image_height},
          {"stem_channels", c.stem_channels},
          {"stage_channels", c.stage_channels},
          {"lowdim_dim", c.lowdim_dim},
          {"category_count", c.category_count},
          {"token_dim", c.token_dim},
          {"history", c.history},
          {"attn_layers", c.attn_layers},
          {"attn_heads", c.attn_heads},
          {"ffn_mult", c.ffn_mult},
          {"box_conditioning", c.box_conditioning},
          {"positional_encoding", c.positional_encoding},
          {"freeze_temporal", c.freeze_temporal}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.view_count = j.value("view_count", c.view_count);
  c.image_width = j.value("image_width", c.image_width);
  c.image_height = j.value("image_height", c.image_height);
  c.stem_channels = j.value("stem_channels", c.stem_channels);
  c.stage_channels = j.value("stage_channels", c.stage_channels);
  c.lowdim_dim = j.value("lowdim_dim", c.lowdim_dim);
  c.category_count = j.value("category_count", c.category_count);
  c.token_dim = j.value("token_dim", c.token_dim);
  c.history = j.value("history", c.history);
  c.attn_layers = j.value("attn_layers", c.attn_layers);
  c.attn_heads = j.value("attn_heads", c.attn_heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.box_conditioning = j.value("box_conditioning", c.box_conditioning);
  c.positional_encoding = j.value("positional_encoding", c.positional_encoding);
  c.freeze_temporal = j.value("freeze_temporal", c.freeze_temporal);
  if (c.token_dim <= 0 || c.history <= 0 || c.view_count <= 0 || c.stem_channels <= 0)
    throw ConfigError("encoder dims must be positive");
  if (c.image_width % 4 != 0 || c.image_height % 4 != 0) throw ConfigError("encoder image dims must be multiples of 4");
  return c;
}

std::vector<float> box_features(const std::optional<GraspBox>& box, int width, int height, int category_count) {
  std::vector<float> f(static_cast<std::size_t>(category_count) + 5, 0.0f);
  if (!box) return f;
  if (box->category < 0 || box->category >= category_count)
    throw ValidationError("category", "box category " + std::to_string(box->category) + " is outside [0, " +
                                          std::to_string(category_count) + ")");
  f[box->category] = 1.0f;
  f[category_count + 0] = static_cast<float>(box->cx / width);
  f[category_count + 1] = static_cast<float>(box->cy / height);
  f[category_count + 2] = static_cast<float>(box->w / width);
  f[category_count + 3] = static_cast<float>(box->h / height);
  f[category_count + 4] = 1.0f;
  return f;
}

namespace {

torch::nn::Sequential conv_stage(int in, int out, int kernel, int stride, int padding) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding)),
      torch::nn::GroupNorm(group_count(out), out), torch::nn::SiLU());
}

}  // namespace

ViewEncoderImpl::ViewEncoderImpl(const EncoderConfig& c) {
  stem_ = register_module("stem", conv_stage(3, c.stem_channels, 4, 4, 0));
  int in = c.stem_channels;
  for (std::size_t i = 0; i < c.stage_channels.size(); ++i) {
    stages_.push_back(register_module("stage" + std::to_string(i), conv_stage(in, c.stage_channels[i], 3, 2, 1)));
    in = c.stage_channels[i];
  }
}

torch::Tensor ViewEncoderImpl::forward(torch::Tensor x) {
  x = stem_->forward(x);
  std::vector<torch::Tensor> pooled{x.mean({2, 3})};
  for (auto& s : stages_) {
    x = s->forward(x);
    pooled.push_back(x.mean({2, 3}));
  }
  return torch::cat(pooled, 1);
}

ObsEncoderImpl::ObsEncoderImpl(const EncoderConfig& c) : config_(c) {
  for (int v = 0; v < c.view_count; ++v) views_.push_back(register_module("view" + std::to_string(v), ViewEncoder(c)));
  fuse_ = register_module("fuse", torch::nn::Linear(c.fused_input_dim(), c.token_dim));
  pos_ = register_parameter("pos", torch::randn({c.history, c.token_dim}) * 0.02);
  blocks_ = register_module("temporal", torch::nn::ModuleList());
  for (int i = 0; i < c.attn_layers; ++i) blocks_->push_back(SelfAttentionBlock(c.token_dim, c.attn_heads, c.ffn_mult));
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c.token_dim})));
  if (!c.positional_encoding) pos_.set_requires_grad(false);
  if (c.freeze_temporal)
    for (auto& p : temporal_parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> ObsEncoderImpl::temporal_parameters() const {
  std::vector<torch::Tensor> out{pos_};
  for (const auto& p : blocks_->parameters()) out.push_back(p);
  return out;
}

torch::Tensor ObsEncoderImpl::encode_view(const torch::Tensor& images, int view_id) {
  if (view_id < 0 || view_id >= config_.view_count) throw ShapeError("view id out of range");
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != config_.image_height ||
      images.size(3) != config_.image_width)
    throw ShapeError("encode_view expects [N, 3, " + std::to_string(config_.image_height) + ", " +
                     std::to_string(config_.image_width) + "] images");
  return views_[view_id]->forward(images);
}

torch::Tensor ObsEncoderImpl::fuse(const torch::Tensor& view_features, const torch::Tensor& lowdim,
                                   const torch::Tensor& box) {
  if (view_features.size(-1) != config_.view_count * config_.view_feature_dim() ||
      lowdim.size(-1) != config_.lowdim_dim || box.size(-1) != config_.box_dim())
    throw ShapeError("fuse input widths do not match the encoder config");
  const auto b = config_.box_conditioning ? box : torch::zeros_like(box);
  return fuse_(torch::cat({view_features, lowdim, b}, -1));
}

torch::Tensor ObsEncoderImpl::attend(torch::Tensor tokens) {
  if (tokens.dim() != 3 || tokens.size(1) != config_.history || tokens.size(2) != config_.token_dim)
    throw ShapeError("temporal attention expects [B, " + std::to_string(config_.history) + ", " +
                     std::to_string(config_.token_dim) + "] tokens");
  if (config_.positional_encoding) tokens = tokens + pos_.unsqueeze(0);
  for (const auto& block : *blocks_) tokens = block->as<SelfAttentionBlockImpl>()->forward(tokens);
  return norm_(tokens);
}

torch::Tensor ObsEncoderImpl::forward(const torch::Tensor& images, const torch::Tensor& lowdim,
                                      const torch::Tensor& box) {
  if (images.dim() != 6 || images.size(2) != config_.view_count)
    throw ShapeError("observation images must be [B, T, V, 3, H, W]");
  const auto B = images.size(0), T = images.size(1);
  if (T != config_.history) throw ShapeError("observation history must hold " + std::to_string(config_.history) + " steps");
  if (lowdim.dim() != 3 || lowdim.size(0) != B || lowdim.size(1) != T || box.dim() != 3 || box.size(0) != B ||
      box.size(1) != T)
    throw ShapeError("lowdim and box inputs must be [B, T, *] matching the images");
  std::vector<torch::Tensor> feats;
  for (int v = 0; v < config_.view_count; ++v)
    feats.push_back(encode_view(images.select(2, v).reshape({B * T, 3, images.size(4), images.size(5)}), v));
  const auto view_features = torch::cat(feats, 1).view({B, T, -1});
  return attend(fuse(view_features, lowdim, box));
}

}  // namespace graspdp
