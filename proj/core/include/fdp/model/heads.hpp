#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fdp/model/layers.hpp"

namespace fdp::model {

struct Prediction {
  std::vector<double> probs;
  std::size_t label = 0;
};

// Argmax with the lowest index winning ties.
std::size_t argmax(std::span<const double> values);
// Row r of an N x m probability tensor.
template <class T>
Prediction prediction_row(const Tensor<T>& probs, std::size_t row);

// 2x2 max-pool, flatten, FC(hidden) -> ReLU -> FC(m) -> softmax.
template <class T>
class MerHead {
 public:
  MerHead() = default;
  MerHead(ParameterSet<T>& ps, const std::string& name, std::size_t channels, std::size_t height,
          std::size_t width, std::size_t hidden, std::size_t classes, std::mt19937_64& rng);
  // B x C_d x H_r x W_r -> B x m probabilities
  Var<T> operator()(Context<T>& ctx, const Var<T>& fd) const;

  std::size_t classes() const noexcept { return classes_; }

 private:
  std::size_t c_ = 0, h_ = 0, w_ = 0, classes_ = 0;
  Linear<T> fc1_, fc2_;
};

struct DicConfig {
  // Encoder block widths; the decoder mirrors them in reverse.
  std::vector<std::size_t> channels{64, 128, 256, 256};
  // Widths of the upsampling blocks that take the decoder output to the crop
  // extent; the last entry repeats if more blocks are needed.
  std::vector<std::size_t> up_channels{64, 32};
  double leaky_slope = 0.01;
};

// Fully convolutional encoder-decoder producing a 1 x S x S image in (0,1).
// Encoder blocks: conv3x3 + BN + leaky ReLU, whose output is the skip, then
// 2x2 max-pool. Decoder blocks: 2x2 transposed conv + conv3x3 + BN + leaky
// ReLU, plus the matching skip. Upsampling blocks repeat the decoder block
// without skips; a 1x1 conv and a sigmoid finish.
template <class T>
class DicNetwork {
 public:
  DicNetwork() = default;
  DicNetwork(ParameterSet<T>& ps, const std::string& name, std::size_t in_channels, std::size_t extent,
             std::size_t out_extent, const DicConfig& cfg, std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& fd) const;

 private:
  struct Block {
    ConvTranspose2d<T> up;
    Conv2d<T> conv;
    BatchNorm<T> bn;
  };
  struct Down {
    Conv2d<T> conv;
    BatchNorm<T> bn;
  };

  Var<T> up_block(Context<T>& ctx, const Block& blk, const Var<T>& x) const;

  std::size_t in_channels_ = 0, extent_ = 0, out_extent_ = 0;
  double slope_ = 0.01;
  std::vector<Down> down_;
  std::vector<Block> decoder_;
  std::vector<Block> upsample_;
  Conv2d<T> out_;
};

// Mean over pixels (and batch) of (a - b)^2.
template <class T>
Var<T> dic_loss(const Var<T>& predicted, const Var<T>& target);

// Mean over the batch of -log max(p[label], 1e-12).
template <class T>
Var<T> mer_loss(const Var<T>& probs, std::span<const std::size_t> labels);

struct LossWeights {
  double mer = 1.0;
  double dic = 100.0;
  double rank = 0.1;
};

// L = w_mer * L_MER + w_dic * L_DIC + w_rank * L_Rank
template <class T>
Var<T> full_loss(const Var<T>& mer, const Var<T>& dic, const Var<T>& rank, const LossWeights& w);
double full_loss_value(double mer, double dic, double rank, const LossWeights& w);

}  // namespace fdp::model
