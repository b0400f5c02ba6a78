#include "fdp/model/heads.hpp"

#include <algorithm>

namespace fdp::model {

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw UsageError("argmax: empty input");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

template <class T>
Prediction prediction_row(const Tensor<T>& probs, std::size_t row) {
  const std::size_t m = probs.dim(1);
  Prediction p;
  p.probs.resize(m);
  for (std::size_t j = 0; j < m; ++j) p.probs[j] = static_cast<double>(probs.at(row, j));
  p.label = argmax(p.probs);
  return p;
}

template <class T>
MerHead<T>::MerHead(ParameterSet<T>& ps, const std::string& name, std::size_t channels, std::size_t height,
                    std::size_t width, std::size_t hidden, std::size_t classes, std::mt19937_64& rng)
    : c_(channels), h_(height), w_(width), classes_(classes) {
  if (classes < 2) throw UsageError("mer head: need at least 2 classes");
  if (height < 2 || width < 2) throw UsageError("mer head: map too small for 2x2 pooling");
  const std::size_t flat = channels * (height / 2) * (width / 2);
  fc1_ = Linear<T>(ps, name + ".fc1", flat, hidden, rng);
  fc2_ = Linear<T>(ps, name + ".fc2", hidden, classes, rng);
}

template <class T>
Var<T> MerHead<T>::operator()(Context<T>& ctx, const Var<T>& fd) const {
  const auto& d = fd.dims();
  if (d.size() != 4 || d[1] != c_ || d[2] != h_ || d[3] != w_) {
    throw ShapeError("mer head: expected Bx" + std::to_string(c_) + "x" + std::to_string(h_) + "x" +
                     std::to_string(w_) + ", got " + num::shape_string(d));
  }
  auto pooled = num::max_pool2d(fd, 2, 2);
  auto flat = num::reshape(pooled, {d[0], pooled.value().size() / d[0]});
  return num::softmax(fc2_(ctx, num::relu(fc1_(ctx, flat))));
}

template <class T>
DicNetwork<T>::DicNetwork(ParameterSet<T>& ps, const std::string& name, std::size_t in_channels,
                          std::size_t extent, std::size_t out_extent, const DicConfig& cfg, std::mt19937_64& rng)
    : in_channels_(in_channels), extent_(extent), out_extent_(out_extent), slope_(cfg.leaky_slope) {
  const std::size_t depth = cfg.channels.size();
  if (depth == 0 || cfg.up_channels.empty()) throw UsageError("dic: channel lists must be nonempty");
  if (extent % (std::size_t{1} << depth)) {
    throw UsageError("dic: extent " + std::to_string(extent) + " does not survive " + std::to_string(depth) +
                     " poolings");
  }
  std::size_t n_up = 0;
  for (std::size_t e = extent; e < out_extent; e *= 2) ++n_up;
  if ((extent << n_up) != out_extent) {
    throw UsageError("dic: output extent " + std::to_string(out_extent) + " is not extent " +
                     std::to_string(extent) + " times a power of two");
  }
  std::size_t c = in_channels;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string bn = name + ".enc" + std::to_string(i);
    down_.push_back({Conv2d<T>(ps, bn + ".conv", c, cfg.channels[i], 3, {.stride = 1, .padding = 1}, rng),
                     BatchNorm<T>(ps, bn + ".bn", cfg.channels[i])});
    c = cfg.channels[i];
  }
  auto make_block = [&](const std::string& bn, std::size_t in, std::size_t out) {
    return Block{ConvTranspose2d<T>(ps, bn + ".up", in, out, 2, 2, rng),
                 Conv2d<T>(ps, bn + ".conv", out, out, 3, {.stride = 1, .padding = 1}, rng),
                 BatchNorm<T>(ps, bn + ".bn", out)};
  };
  for (std::size_t j = 0; j < depth; ++j) {
    const std::size_t out = cfg.channels[depth - 1 - j];
    decoder_.push_back(make_block(name + ".dec" + std::to_string(j), c, out));
    c = out;
  }
  for (std::size_t j = 0; j < n_up; ++j) {
    const std::size_t out = cfg.up_channels[std::min(j, cfg.up_channels.size() - 1)];
    upsample_.push_back(make_block(name + ".up" + std::to_string(j), c, out));
    c = out;
  }
  out_ = Conv2d<T>(ps, name + ".out", c, 1, 1, {}, rng);
}

template <class T>
Var<T> DicNetwork<T>::up_block(Context<T>& ctx, const Block& blk, const Var<T>& x) const {
  return num::leaky_relu(blk.bn(ctx, blk.conv(ctx, blk.up(ctx, x))), static_cast<T>(slope_));
}

template <class T>
Var<T> DicNetwork<T>::operator()(Context<T>& ctx, const Var<T>& fd) const {
  const auto& d = fd.dims();
  if (d.size() != 4 || d[1] != in_channels_ || d[2] != extent_ || d[3] != extent_) {
    throw ShapeError("dic: expected Bx" + std::to_string(in_channels_) + "x" + std::to_string(extent_) + "x" +
                     std::to_string(extent_) + ", got " + num::shape_string(d));
  }
  const T slope = static_cast<T>(slope_);
  std::vector<Var<T>> skips;
  Var<T> x = fd;
  for (const auto& blk : down_) {
    x = num::leaky_relu(blk.bn(ctx, blk.conv(ctx, x)), slope);
    skips.push_back(x);
    x = num::max_pool2d(x, 2, 2);
  }
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    x = num::add(up_block(ctx, decoder_[j], x), skips[skips.size() - 1 - j]);
  }
  for (const auto& blk : upsample_) x = up_block(ctx, blk, x);
  return num::sigmoid(out_(ctx, x));
}

template <class T>
Var<T> dic_loss(const Var<T>& predicted, const Var<T>& target) {
  if (predicted.dims() != target.dims()) {
    throw ShapeError("dic_loss: extents " + num::shape_string(predicted.dims()) + " vs " +
                     num::shape_string(target.dims()));
  }
  return num::mse(predicted, target);
}

template <class T>
Var<T> mer_loss(const Var<T>& probs, std::span<const std::size_t> labels) {
  return num::nll_from_probs(probs, labels);
}

template <class T>
Var<T> full_loss(const Var<T>& mer, const Var<T>& dic, const Var<T>& rank, const LossWeights& w) {
  if (w.mer < 0 || w.dic < 0 || w.rank < 0) throw UsageError("full_loss: weights must be nonnegative");
  auto l = num::scale(mer, static_cast<T>(w.mer));
  l = num::add(l, num::scale(dic, static_cast<T>(w.dic)));
  return num::add(l, num::scale(rank, static_cast<T>(w.rank)));
}

double full_loss_value(double mer, double dic, double rank, const LossWeights& w) {
  return w.mer * mer + w.dic * dic + w.rank * rank;
}

#define FDP_INSTANTIATE_HEADS(T)                                                         \
  template Prediction prediction_row<T>(const Tensor<T>&, std::size_t);                  \
  template class MerHead<T>;                                                             \
  template class DicNetwork<T>;                                                          \
  template Var<T> dic_loss<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> mer_loss<T>(const Var<T>&, std::span<const std::size_t>);              \
  template Var<T> full_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&, const LossWeights&);

FDP_INSTANTIATE_HEADS(float)
FDP_INSTANTIATE_HEADS(double)

}  // namespace fdp::model
