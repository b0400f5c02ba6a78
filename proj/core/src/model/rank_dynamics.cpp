#include "fdp/model/rank_dynamics.hpp"

#include <tuple>

namespace fdp::model {

std::pair<std::size_t, std::size_t> square_factors(std::size_t n) {
  if (n == 0) throw UsageError("square_factors: n must be positive");
  std::size_t r = 1;
  for (std::size_t i = 1; i * i <= n; ++i)
    if (n % i == 0) r = i;
  return {r, n / r};
}

template <class T>
RankScorer<T>::RankScorer(ParameterSet<T>& ps, const std::string& name, std::size_t feature_dim,
                          std::mt19937_64& rng) {
  u = &ps.add(name + ".u", uniform_init<T>({feature_dim, 1}, feature_dim, rng));
}

template <class T>
Var<T> RankScorer<T>::operator()(Context<T>& ctx, const Var<T>& features) const {
  if (features.value().rank() != 2 || features.dim(1) != u->value.dim(0)) {
    throw ShapeError("rank_score: feature width " + num::shape_string(features.dims()) + " vs scorer " +
                     std::to_string(u->value.dim(0)));
  }
  return num::matmul(features, ctx.graph.parameter(*u));
}

template <class T>
T rank_score(const Tensor<T>& feature, const Tensor<T>& u) {
  if (feature.size() != u.size()) {
    throw ShapeError("rank_score: widths " + std::to_string(feature.size()) + " and " + std::to_string(u.size()));
  }
  T s = 0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * feature[i];
  return s;
}

template <class T>
Var<T> rank_loss(const Var<T>& scores, T slope) {
  if (scores.value().rank() != 2) throw ShapeError("rank_loss: scores must be B x t");
  const std::size_t b = scores.dim(0), t = scores.dim(1);
  Tensor<T> target({b, t});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < t; ++k) target.at(i, k) = slope * static_cast<T>(k);
  auto dev = num::abs(num::sub(scores.graph().constant(std::move(target)), scores));
  return num::scale(num::sum(dev), T(1) / static_cast<T>(b));
}

template <class T>
TemporalPool<T>::TemporalPool(ParameterSet<T>& ps, const std::string& name, std::size_t feature_dim,
                              std::size_t frames, std::size_t out_channels, std::mt19937_64& rng)
    : t_(frames) {
  if (frames == 0 || out_channels == 0) throw UsageError("temporal_pool: frames and channels must be positive");
  std::tie(h_, w_) = square_factors(feature_dim);
  conv_ = Conv3d<T>(ps, name + ".conv", 1, out_channels, frames, 3, 3, {0, 1, 1}, rng);
}

template <class T>
Var<T> TemporalPool<T>::operator()(Context<T>& ctx, const Var<T>& features) const {
  if (features.value().rank() != 2 || features.dim(1) != h_ * w_ || features.dim(0) % t_) {
    throw ShapeError("temporal_pool: expected (B*" + std::to_string(t_) + ") x " + std::to_string(h_ * w_) +
                     " features, got " + num::shape_string(features.dims()));
  }
  const std::size_t b = features.dim(0) / t_;
  auto vol = num::reshape(features, {b, 1, t_, h_, w_});
  auto y = conv_(ctx, vol);
  return num::reshape(y, {b, y.dim(1), h_, w_});
}

#define FDP_INSTANTIATE_RANK(T)                                        \
  template class RankScorer<T>;                                        \
  template T rank_score<T>(const Tensor<T>&, const Tensor<T>&);        \
  template Var<T> rank_loss<T>(const Var<T>&, T);                      \
  template class TemporalPool<T>;

FDP_INSTANTIATE_RANK(float)
FDP_INSTANTIATE_RANK(double)

}  // namespace fdp::model
