#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "graspdp/core/types.hpp"

namespace graspdp {

struct EncoderConfig {
  int view_count = 2;
  int image_width = 96;
  int image_height = 96;
  int stem_channels = 8;  // stride-4 patchify stem
  std::vector<int> stage_channels{16, 32, 32};  // stride-2 stages after the stem
  int lowdim_dim = 4;  // eef xyz + gripper width
  int category_count = 11;
  int token_dim = 128;
  int history = 2;
  int attn_layers = 2;
  int attn_heads = 4;
  int ffn_mult = 4;
  bool box_conditioning = true;
  bool positional_encoding = true;
  bool freeze_temporal = false;  // keep the temporal transformer at its random init
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;

  int box_dim() const { return category_count + 5; }
  int view_feature_dim() const;
  int fused_input_dim() const { return view_count * view_feature_dim() + lowdim_dim + box_dim(); }
};

nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

// one-hot(category) ++ (cx/W, cy/H, w/W, h/H) ++ [valid]; all zeros for none.
// Throws ValidationError("category") when the category is outside [0, C).
std::vector<float> box_features(const std::optional<GraspBox>& box, int width, int height, int category_count);

// Per-view conv pyramid: a patchify stem, stride-2 stages, GroupNorm + SiLU,
// global average pooling of every stage, stage features concatenated.
class ViewEncoderImpl : public torch::nn::Module {
 public:
  explicit ViewEncoderImpl(const EncoderConfig& c);
  torch::Tensor forward(torch::Tensor images);  // [N, 3, H, W] in [0, 1] -> [N, F]

 private:
  torch::nn::Sequential stem_{nullptr};
  std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(ViewEncoder);

// images [B, T, V, 3, H, W], lowdim [B, T, 4], boxes [B, T, C + 5]
//   -> tokens [B, T, d]
class ObsEncoderImpl : public torch::nn::Module {
 public:
  explicit ObsEncoderImpl(const EncoderConfig& c);

  const EncoderConfig& config() const { return config_; }

  // [N, 3, H, W] -> [N, F]; ShapeError on wrong dims.
  torch::Tensor encode_view(const torch::Tensor& images, int view_id);
  // Linear projection of [views ++ lowdim ++ box]; the box slice is zeroed
  // first when box conditioning is off. Inputs share leading dims.
  torch::Tensor fuse(const torch::Tensor& view_features, const torch::Tensor& lowdim, const torch::Tensor& box);
  // Positional encoding + self-attention over exactly `history` tokens.
  torch::Tensor attend(torch::Tensor tokens);

  torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& lowdim, const torch::Tensor& box);

  std::vector<torch::Tensor> temporal_parameters() const;

 private:
  EncoderConfig config_;
  std::vector<ViewEncoder> views_;
  torch::nn::Linear fuse_{nullptr};
  torch::Tensor pos_;
  torch::nn::ModuleList blocks_{nullptr};
  torch::nn::LayerNorm norm_{nullptr};
};
TORCH_MODULE(ObsEncoder);

}  // namespace graspdp
