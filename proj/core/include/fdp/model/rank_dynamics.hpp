#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>

#include "fdp/model/layers.hpp"

namespace fdp::model {

// Most-square factor pair (rows <= cols) of n.
std::pair<std::size_t, std::size_t> square_factors(std::size_t n);

// Linear scorer S(F) = u . F, without bias.
template <class T>
class RankScorer {
 public:
  RankScorer() = default;
  RankScorer(ParameterSet<T>& ps, const std::string& name, std::size_t feature_dim, std::mt19937_64& rng);
  // features: M x d_F -> M x 1 scores
  Var<T> operator()(Context<T>& ctx, const Var<T>& features) const;

  Parameter<T>* u = nullptr;
};

// Plain-value score for tests and diagnostics.
template <class T>
T rank_score(const Tensor<T>& feature, const Tensor<T>& u);

// scores: B x t. Per clip sum_k |slope*k - s_k|, averaged over the B clips.
template <class T>
Var<T> rank_loss(const Var<T>& scores, T slope);

// Reshapes every frame feature to 1 x H_r x W_r, stacks the t frames along
// depth and collapses time with a t x 3 x 3 conv3d (spatial padding 1).
// features: (B*t) x d_F, frames of a clip contiguous -> B x C_d x H_r x W_r.
template <class T>
class TemporalPool {
 public:
  TemporalPool() = default;
  TemporalPool(ParameterSet<T>& ps, const std::string& name, std::size_t feature_dim, std::size_t frames,
               std::size_t out_channels, std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& features) const;

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t frames() const noexcept { return t_; }
  const Conv3d<T>& conv() const noexcept { return conv_; }

 private:
  std::size_t t_ = 1, h_ = 1, w_ = 1;
  Conv3d<T> conv_;
};

}  // namespace fdp::model
