#include "fdp/model/encoder.hpp"

#include <cmath>

namespace fdp::model {

void EncoderConfig::validate() const {
  if (in_channels == 0 || input_size == 0 || stem_channels == 0 || stem_kernel == 0 || stem_stride == 0 ||
      heads == 0 || mlp_ratio == 0) {
    throw UsageError("encoder: all sizes must be positive");
  }
  if (stage_channels.empty()) throw UsageError("encoder: at least one stage is required");
  if (patches.size() != stage_channels.size()) {
    throw UsageError("encoder: " + std::to_string(patches.size()) + " patch sizes for " +
                     std::to_string(stage_channels.size()) + " stages");
  }
  for (std::size_t p : patches)
    if (p == 0) throw UsageError("encoder: patch sizes must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw UsageError("encoder: dropout must lie in [0, 1)");
  for (std::size_t c : stage_channels) {
    if (c == 0 || c % heads) {
      throw UsageError("encoder: stage channels " + std::to_string(c) + " not divisible by heads " +
                       std::to_string(heads));
    }
  }
  spatial_trace();
}

std::vector<std::size_t> EncoderConfig::spatial_trace() const {
  const std::size_t pad = stem_kernel / 2;
  if (input_size + 2 * pad < stem_kernel) {
    throw UsageError("encoder: stem kernel larger than input extent " + std::to_string(input_size));
  }
  std::vector<std::size_t> trace{(input_size + 2 * pad - stem_kernel) / stem_stride + 1};
  for (std::size_t s = 0; s < stage_channels.size() && s < patches.size(); ++s) {
    if (patches[s] == 0 || trace.back() % patches[s]) {
      throw UsageError("encoder: patch " + std::to_string(patches[s]) + " does not divide extent " +
                       std::to_string(trace.back()) + " at stage " + std::to_string(s));
    }
    trace.push_back(trace.back() / patches[s]);
  }
  return trace;
}

template <class T>
Var<T> patch_embed(const Var<T>& x, const Var<T>& weight, const num::OptVar<T>& bias, std::size_t patch) {
  if (x.value().rank() != 4 || x.dim(2) % patch || x.dim(3) % patch) {
    throw ShapeError("patch_embed: patch " + std::to_string(patch) + " does not divide " +
                     num::shape_string(x.dims()));
  }
  if (weight.dim(2) != patch || weight.dim(3) != patch) throw ShapeError("patch_embed: kernel must equal patch");
  return num::conv2d(x, weight, bias, {.stride = patch, .padding = 0, .groups = 1});
}

template <class T>
Var<T> scaled_dot_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, Var<T>* weights) {
  if (q.value().rank() != 3 || q.dims() != k.dims() || q.dims() != v.dims()) {
    throw ShapeError("attention: q/k/v dims differ: " + num::shape_string(q.dims()) + ", " +
                     num::shape_string(k.dims()) + ", " + num::shape_string(v.dims()));
  }
  const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(q.dim(2))));
  auto a = num::softmax(num::scale(num::bmm(q, k, true), scale));
  if (weights) *weights = a;
  return num::bmm(a, v);
}

template <class T>
MultiHeadConv<T>::MultiHeadConv(ParameterSet<T>& ps, const std::string& name, std::size_t channels,
                                std::size_t heads, std::mt19937_64& rng)
    : conv_(ps, name + ".conv", channels, channels, 3, {.stride = 1, .padding = 1, .groups = heads}, rng),
      bn_(ps, name + ".bn", channels),
      fuse_(ps, name + ".fuse", channels, channels, 1, {}, rng) {}

template <class T>
Var<T> MultiHeadConv<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  return fuse_(ctx, num::relu(bn_(ctx, conv_(ctx, x))));
}

template <class T>
Mlp<T>::Mlp(ParameterSet<T>& ps, const std::string& name, std::size_t channels, std::size_t ratio,
            std::mt19937_64& rng)
    : fc1_(ps, name + ".fc1", channels, channels * ratio, 1, {}, rng),
      fc2_(ps, name + ".fc2", channels * ratio, channels, 1, {}, rng) {}

template <class T>
Var<T> Mlp<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  return fc2_(ctx, num::relu(fc1_(ctx, x)));
}

template <class T>
LocalAggregator<T>::LocalAggregator(ParameterSet<T>& ps, const std::string& name, std::size_t channels,
                                    const EncoderConfig& cfg, std::mt19937_64& rng)
    : mhc_(ps, name + ".mhc", channels, cfg.heads, rng), mlp_(ps, name + ".mlp", channels, cfg.mlp_ratio, rng) {}

template <class T>
Var<T> LocalAggregator<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  auto y = num::add(x, mhc_(ctx, x));
  return num::add(y, mlp_(ctx, y));
}

template <class T>
MultiHeadSelfAttention<T>::MultiHeadSelfAttention(ParameterSet<T>& ps, const std::string& name,
                                                  std::size_t channels, std::size_t heads, double dropout,
                                                  std::mt19937_64& rng)
    : heads_(heads),
      dropout_(dropout),
      wq_(ps, name + ".wq", channels, channels, 1, {.groups = heads}, rng, false),
      wk_(ps, name + ".wk", channels, channels, 1, {.groups = heads}, rng, false),
      wv_(ps, name + ".wv", channels, channels, 1, {.groups = heads}, rng, false),
      ffn_(ps, name + ".ffn", channels, channels, 1, {.groups = heads}, rng),
      proj_(ps, name + ".proj", channels, channels, 1, {}, rng) {
  if (channels % heads) throw ShapeError(name + ": channels not divisible by heads");
}

template <class T>
Var<T> MultiHeadSelfAttention<T>::operator()(Context<T>& ctx, const Var<T>& x, Var<T>* weights) const {
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t n = h * w, d = c / heads_;
  auto to_heads = [&](const Var<T>& t) {
    return num::reshape(num::permute(num::reshape(t, {b, heads_, d, n}), {0, 1, 3, 2}), {b * heads_, n, d});
  };
  auto a = scaled_dot_attention(to_heads(wq_(ctx, x)), to_heads(wk_(ctx, x)), to_heads(wv_(ctx, x)), weights);
  auto merged = num::reshape(num::permute(num::reshape(a, {b, heads_, n, d}), {0, 1, 3, 2}), {b, c, h, w});
  auto y = ffn_(ctx, merged);
  if (ctx.training && dropout_ > 0) {
    if (!ctx.rng) throw UsageError("attention: training with dropout needs a generator");
    y = num::dropout(y, static_cast<T>(dropout_), true, *ctx.rng);
  }
  return proj_(ctx, y);
}

template <class T>
GlobalAggregator<T>::GlobalAggregator(ParameterSet<T>& ps, const std::string& name, std::size_t channels,
                                      const EncoderConfig& cfg, std::mt19937_64& rng)
    : pw_(ps, name + ".pw", channels, channels, 1, {}, rng),
      mhsa_(ps, name + ".mhsa", channels, cfg.heads, cfg.dropout, rng),
      mhc_(ps, name + ".mhc", channels, cfg.heads, rng),
      mlp_(ps, name + ".mlp", channels, cfg.mlp_ratio, rng) {}

template <class T>
Var<T> GlobalAggregator<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  auto x1 = num::add(x, mhsa_(ctx, pw_(ctx, x)));
  auto x2 = num::add(x1, mhc_(ctx, x1));
  return num::add(x2, mlp_(ctx, x2));
}

template <class T>
FrameEncoder<T>::FrameEncoder(ParameterSet<T>& ps, const std::string& name, const EncoderConfig& cfg,
                              std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  stem_ = Conv2d<T>(ps, name + ".stem", cfg.in_channels, cfg.stem_channels, cfg.stem_kernel,
                    {.stride = cfg.stem_stride, .padding = cfg.stem_kernel / 2, .groups = 1, .floor_mode = true}, rng);
  std::size_t in = cfg.stem_channels;
  for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
    const std::string sn = name + ".stage" + std::to_string(s);
    const std::size_t c = cfg.stage_channels[s];
    Stage st;
    const std::size_t p = cfg.patches[s];
    st.embed = Conv2d<T>(ps, sn + ".embed", in, c, p, {.stride = p, .padding = 0, .groups = 1}, rng);
    st.patch = p;
    for (std::size_t i = 0; i < cfg.num_local; ++i)
      st.local.emplace_back(ps, sn + ".local" + std::to_string(i), c, cfg, rng);
    for (std::size_t i = 0; i < cfg.num_global; ++i)
      st.global.emplace_back(ps, sn + ".global" + std::to_string(i), c, cfg, rng);
    stages_.push_back(std::move(st));
    in = c;
  }
  head_bn_ = BatchNorm<T>(ps, name + ".head_bn", in);
}

template <class T>
Var<T> FrameEncoder<T>::operator()(Context<T>& ctx, const Var<T>& frames) const {
  const auto& d = frames.dims();
  if (d.size() != 4 || d[1] != cfg_.in_channels || d[2] != cfg_.input_size || d[3] != cfg_.input_size) {
    throw ShapeError("encoder: expected Bx" + std::to_string(cfg_.in_channels) + "x" +
                     std::to_string(cfg_.input_size) + "x" + std::to_string(cfg_.input_size) + " frames, got " +
                     num::shape_string(d));
  }
  auto x = stem_(ctx, frames);
  for (const auto& st : stages_) {
    x = patch_embed(x, ctx.graph.parameter(*st.embed.weight), ctx.graph.parameter(*st.embed.bias), st.patch);
    for (const auto& blk : st.local) x = blk(ctx, x);
    for (const auto& blk : st.global) x = blk(ctx, x);
  }
  return num::global_avg_pool(head_bn_(ctx, x));
}

#define FDP_INSTANTIATE_ENCODER(T)                                                                        \
  template Var<T> patch_embed<T>(const Var<T>&, const Var<T>&, const num::OptVar<T>&, std::size_t);       \
  template Var<T> scaled_dot_attention<T>(const Var<T>&, const Var<T>&, const Var<T>&, Var<T>*);          \
  template class MultiHeadConv<T>;                                                                        \
  template class Mlp<T>;                                                                                  \
  template class LocalAggregator<T>;                                                                      \
  template class MultiHeadSelfAttention<T>;                                                               \
  template class GlobalAggregator<T>;                                                                     \
  template class FrameEncoder<T>;

FDP_INSTANTIATE_ENCODER(float)
FDP_INSTANTIATE_ENCODER(double)

}  // namespace fdp::model
