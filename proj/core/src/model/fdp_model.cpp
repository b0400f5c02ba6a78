#include "fdp/model/fdp_model.hpp"

#include <random>

namespace fdp::model {

void ModelConfig::validate() const {
  encoder.validate();
  if (frames == 0 || dyn_channels == 0 || mer_hidden == 0) throw UsageError("model: sizes must be positive");
  if (num_classes < 2) throw UsageError("model: need at least 2 classes");
  const auto [h, w] = square_factors(encoder.feature_dim());
  if (h != w) {
    throw UsageError("model: feature width " + std::to_string(encoder.feature_dim()) +
                     " does not reshape to a square map");
  }
}

namespace {

std::mt19937_64 seeded(std::uint64_t seed, const ModelConfig& cfg) {
  cfg.validate();
  return std::mt19937_64(seed);
}

}  // namespace

template <class T>
FdpModel<T>::FdpModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  auto rng = seeded(seed, cfg_);
  const std::size_t d_f = cfg_.encoder.feature_dim();
  encoder_ = FrameEncoder<T>(params_, "encoder", cfg_.encoder, rng);
  scorer_ = RankScorer<T>(params_, "scorer", d_f, rng);
  pool_ = TemporalPool<T>(params_, "pool", d_f, cfg_.frames, cfg_.dyn_channels, rng);
  mer_ = MerHead<T>(params_, "mer", cfg_.dyn_channels, pool_.height(), pool_.width(), cfg_.mer_hidden,
                    cfg_.num_classes, rng);
  dic_ = DicNetwork<T>(params_, "dic", cfg_.dyn_channels, pool_.height(), cfg_.crop(), cfg_.dic, rng);
}

template <class T>
Outputs<T> FdpModel<T>::forward(Context<T>& ctx, const Tensor<T>& clips) const {
  const auto& d = clips.dims();
  const std::size_t c = cfg_.encoder.in_channels, s = cfg_.crop();
  if (d.size() != 5 || d[1] != cfg_.frames || d[2] != c || d[3] != s || d[4] != s) {
    throw ShapeError("model: expected Bx" + std::to_string(cfg_.frames) + "x" + std::to_string(c) + "x" +
                     std::to_string(s) + "x" + std::to_string(s) + " clips, got " + num::shape_string(d));
  }
  const std::size_t b = d[0];
  Outputs<T> out;
  auto frames = ctx.graph.constant(clips.reshaped({b * cfg_.frames, c, s, s}));
  out.features = encoder_(ctx, frames);
  out.scores = num::reshape(scorer_(ctx, out.features), {b, cfg_.frames});
  out.dynamic = pool_(ctx, out.features);
  out.probs = mer_(ctx, out.dynamic);
  out.image = dic_(ctx, out.dynamic);
  return out;
}

template <class T>
Losses<T> FdpModel<T>::losses(const Outputs<T>& out, std::span<const std::size_t> labels, const Tensor<T>& targets,
                              const LossWeights& weights, double rank_slope) const {
  if (labels.size() != out.probs.dim(0)) throw ShapeError("model: label count differs from batch");
  for (std::size_t l : labels)
    if (l >= cfg_.num_classes) throw DataError("model: label " + std::to_string(l) + " out of range");
  Graph<T>& g = out.probs.graph();
  Losses<T> l;
  l.mer = mer_loss(out.probs, labels);
  l.dic = dic_loss(out.image, g.constant(targets));
  l.rank = rank_loss(out.scores, static_cast<T>(rank_slope));
  l.total = full_loss(l.mer, l.dic, l.rank, weights);
  return l;
}

template class FdpModel<float>;
template class FdpModel<double>;

}  // namespace fdp::model
