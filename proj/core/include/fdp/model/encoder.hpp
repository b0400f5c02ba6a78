#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "fdp/model/layers.hpp"

namespace fdp::model {

struct EncoderConfig {
  std::size_t in_channels = 3;
  std::size_t input_size = 64;
  std::size_t stem_channels = 16;
  std::size_t stem_kernel = 3;
  std::size_t stem_stride = 2;
  // One entry per stage; N_S = stage_channels.size().
  std::vector<std::size_t> stage_channels{32, 64, 128, 256};
  // Patch size per stage; must match stage_channels in length.
  std::vector<std::size_t> patches{2, 2, 2, 2};
  std::size_t num_local = 2;
  std::size_t num_global = 1;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;
  double dropout = 0.1;

  void validate() const;
  std::size_t num_stages() const noexcept { return stage_channels.size(); }
  std::size_t feature_dim() const { return stage_channels.back(); }
  // Spatial extent after the stem (index 0) and after each stage.
  std::vector<std::size_t> spatial_trace() const;
};

// Patch embedding: convolution with kernel = stride = patch.
template <class T>
Var<T> patch_embed(const Var<T>& x, const Var<T>& weight, const num::OptVar<T>& bias, std::size_t patch);

// Scaled dot-product attention per head. q, k, v: (B*h) x N x d. Returns
// (B*h) x N x d; the softmax weights are written to *weights when given.
template <class T>
Var<T> scaled_dot_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, Var<T>* weights = nullptr);

// h parallel grouped 3x3 conv -> BN -> ReLU heads, fused by a pointwise conv.
template <class T>
class MultiHeadConv {
 public:
  MultiHeadConv() = default;
  MultiHeadConv(ParameterSet<T>& ps, const std::string& name, std::size_t channels, std::size_t heads,
                std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;

 private:
  Conv2d<T> conv_;
  BatchNorm<T> bn_;
  Conv2d<T> fuse_;
};

// Two pointwise convs with a ReLU between them.
template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet<T>& ps, const std::string& name, std::size_t channels, std::size_t ratio, std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;

 private:
  Conv2d<T> fc1_, fc2_;
};

template <class T>
class LocalAggregator {
 public:
  LocalAggregator() = default;
  LocalAggregator(ParameterSet<T>& ps, const std::string& name, std::size_t channels, const EncoderConfig& cfg,
                  std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;

 private:
  MultiHeadConv<T> mhc_;
  Mlp<T> mlp_;
};

// Multi-head self-attention over the H*W tokens of a B x C x H x W map.
// Per-head Q/K/V projections and the per-head feed-forward layer are grouped
// pointwise convolutions; heads are then fused by a C x C projection.
template <class T>
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParameterSet<T>& ps, const std::string& name, std::size_t channels, std::size_t heads,
                         double dropout, std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x, Var<T>* weights = nullptr) const;

  std::size_t heads() const noexcept { return heads_; }

 private:
  std::size_t heads_ = 1;
  double dropout_ = 0;
  Conv2d<T> wq_, wk_, wv_, ffn_, proj_;
};

// X1 = X + MHSA(PW(X)); X2 = X1 + MHConv(X1); Y = X2 + MLP(X2).
template <class T>
class GlobalAggregator {
 public:
  GlobalAggregator() = default;
  GlobalAggregator(ParameterSet<T>& ps, const std::string& name, std::size_t channels, const EncoderConfig& cfg,
                   std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;

  const MultiHeadSelfAttention<T>& attention() const noexcept { return mhsa_; }

 private:
  Conv2d<T> pw_;
  MultiHeadSelfAttention<T> mhsa_;
  MultiHeadConv<T> mhc_;
  Mlp<T> mlp_;
};

// Frame encoder: stem conv, N_S stages of (patch embedding, N_L local and N_G
// global aggregators), then BN and global average pooling. Maps
// B x C_in x S x S frames to B x d_F features.
template <class T>
class FrameEncoder {
 public:
  FrameEncoder() = default;
  FrameEncoder(ParameterSet<T>& ps, const std::string& name, const EncoderConfig& cfg, std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& frames) const;

  const EncoderConfig& config() const noexcept { return cfg_; }

 private:
  struct Stage {
    Conv2d<T> embed;
    std::size_t patch = 1;
    std::vector<LocalAggregator<T>> local;
    std::vector<GlobalAggregator<T>> global;
  };

  EncoderConfig cfg_;
  Conv2d<T> stem_;
  std::vector<Stage> stages_;
  BatchNorm<T> head_bn_;
};

}  // namespace fdp::model
