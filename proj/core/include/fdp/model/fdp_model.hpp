#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "fdp/model/encoder.hpp"
#include "fdp/model/heads.hpp"
#include "fdp/model/rank_dynamics.hpp"

namespace fdp::model {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t frames = 8;         // t
  std::size_t dyn_channels = 32;  // C_d
  std::size_t mer_hidden = 128;
  std::size_t num_classes = 3;
  DicConfig dic;

  void validate() const;
  std::size_t crop() const noexcept { return encoder.input_size; }
};

template <class T>
struct Outputs {
  Var<T> features;  // (B*t) x d_F
  Var<T> scores;    // B x t
  Var<T> dynamic;   // B x C_d x H_r x W_r
  Var<T> probs;     // B x m
  Var<T> image;     // B x 1 x S x S
};

template <class T>
struct Losses {
  Var<T> total, mer, dic, rank;
};

// Frame encoder -> rank scorer and temporal pooling -> MER head and dynamic
// image network over the shared dynamic representation.
template <class T>
class FdpModel {
 public:
  FdpModel(const ModelConfig& cfg, std::uint64_t seed);
  FdpModel(const FdpModel&) = delete;
  FdpModel& operator=(const FdpModel&) = delete;

  // clips: B x t x C x S x S, pixels in [0, 1].
  Outputs<T> forward(Context<T>& ctx, const Tensor<T>& clips) const;

  // targets: B x 1 x S x S oracle dynamic images.
  Losses<T> losses(const Outputs<T>& out, std::span<const std::size_t> labels, const Tensor<T>& targets,
                   const LossWeights& weights, double rank_slope) const;

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterSet<T>& params() noexcept { return params_; }
  const ParameterSet<T>& params() const noexcept { return params_; }

 private:
  ModelConfig cfg_;
  ParameterSet<T> params_;
  FrameEncoder<T> encoder_;
  RankScorer<T> scorer_;
  TemporalPool<T> pool_;
  MerHead<T> mer_;
  DicNetwork<T> dic_;
};

extern template class FdpModel<float>;
extern template class FdpModel<double>;

}  // namespace fdp::model
