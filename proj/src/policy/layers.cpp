#include "graspdp/policy/layers.hpp"

#include <cmath>

#include "graspdp/core/errors.hpp"

namespace graspdp {

AttentionImpl::AttentionImpl(int dim, int heads) : heads_(heads) {
  if (heads < 1 || dim % heads != 0) throw ConfigError("attention dim must be divisible by the head count");
  q_ = register_module("q", torch::nn::Linear(dim, dim));
  k_ = register_module("k", torch::nn::Linear(dim, dim));
  v_ = register_module("v", torch::nn::Linear(dim, dim));
  out_ = register_module("proj", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& memory) {
  const auto B = x.size(0), Lq = x.size(1), Lk = memory.size(1), D = x.size(2);
  const auto dh = D / heads_;
  auto split = [&](const torch::Tensor& t, long L) { return t.view({B, L, heads_, dh}).transpose(1, 2); };
  const auto q = split(q_(x), Lq);
  const auto k = split(k_(memory), Lk);
  const auto v = split(v_(memory), Lk);
  const auto att = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(dh)), -1);
  return out_(torch::matmul(att, v).transpose(1, 2).reshape({B, Lq, D}));
}

FeedForwardImpl::FeedForwardImpl(int dim, int hidden) {
  in_ = register_module("fc1", torch::nn::Linear(dim, hidden));
  out_ = register_module("fc2", torch::nn::Linear(hidden, dim));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) { return out_(torch::gelu(in_(x))); }

SelfAttentionBlockImpl::SelfAttentionBlockImpl(int dim, int heads, int ffn_mult) {
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn_ = register_module("attn", Attention(dim, heads));
  ffn_ = register_module("ffn", FeedForward(dim, dim * ffn_mult));
}

torch::Tensor SelfAttentionBlockImpl::forward(torch::Tensor x) {
  const auto h = norm1_(x);
  x = x + attn_(h, h);
  return x + ffn_(norm2_(x));
}

CrossAttentionBlockImpl::CrossAttentionBlockImpl(int dim, int heads, int ffn_mult) {
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  norm3_ = register_module("norm3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  self_ = register_module("self_attn", Attention(dim, heads));
  cross_ = register_module("cross_attn", Attention(dim, heads));
  ffn_ = register_module("ffn", FeedForward(dim, dim * ffn_mult));
}

torch::Tensor CrossAttentionBlockImpl::forward(torch::Tensor x, const torch::Tensor& memory) {
  const auto h = norm1_(x);
  x = x + self_(h, h);
  x = x + cross_(norm2_(x), memory);
  return x + ffn_(norm3_(x));
}

int group_count(int channels) {
  for (int g : {8, 4, 2})
    if (channels % g == 0 && channels / g >= 2) return g;
  return 1;
}

}  // namespace graspdp
