#pragma once

#include <torch/torch.h>

namespace graspdp {

// Multi-head scaled dot-product attention; `memory` supplies keys and values
// (pass the input itself for self-attention).
class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int dim, int heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& memory);

 private:
  int heads_;
  torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr}, out_{nullptr};
};
TORCH_MODULE(Attention);

class FeedForwardImpl : public torch::nn::Module {
 public:
  FeedForwardImpl(int dim, int hidden);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Linear in_{nullptr}, out_{nullptr};
};
TORCH_MODULE(FeedForward);

// Pre-norm self-attention block.
class SelfAttentionBlockImpl : public torch::nn::Module {
 public:
  SelfAttentionBlockImpl(int dim, int heads, int ffn_mult);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  Attention attn_{nullptr};
  FeedForward ffn_{nullptr};
};
TORCH_MODULE(SelfAttentionBlock);

// Pre-norm block: self-attention over the action tokens, cross-attention into
// the conditioning memory, feed-forward.
class CrossAttentionBlockImpl : public torch::nn::Module {
 public:
  CrossAttentionBlockImpl(int dim, int heads, int ffn_mult);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& memory);

 private:
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr}, norm3_{nullptr};
  Attention self_{nullptr}, cross_{nullptr};
  FeedForward ffn_{nullptr};
};
TORCH_MODULE(CrossAttentionBlock);

int group_count(int channels);

}  // namespace graspdp
