#include "fdp/model/layers.hpp"

#include <cmath>
#include <utility>

namespace fdp::model {

template <class T>
void ParameterSet<T>::check_unique(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) throw UsageError("duplicate parameter name: " + name);
  for (const auto& b : buffers_)
    if (b.name == name) throw UsageError("duplicate buffer name: " + name);
}

template <class T>
Parameter<T>& ParameterSet<T>::add(std::string name, Tensor<T> value) {
  check_unique(name);
  params_.emplace_back(std::move(name), std::move(value));
  return params_.back();
}

template <class T>
Tensor<T>& ParameterSet<T>::add_buffer(std::string name, Tensor<T> value) {
  check_unique(name);
  buffers_.push_back(Buffer{std::move(name), std::move(value)});
  return buffers_.back().value;
}

template <class T>
std::vector<Parameter<T>*> ParameterSet<T>::pointers() {
  std::vector<Parameter<T>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <class T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class T>
Tensor<T> uniform_init(Shape dims, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(dims));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
Conv2d<T>::Conv2d(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t kernel, num::Conv2dOptions o, std::mt19937_64& rng, bool with_bias)
    : opts(o) {
  if (o.groups == 0 || in % o.groups || out % o.groups) {
    throw ShapeError(name + ": channels " + std::to_string(in) + "->" + std::to_string(out) +
                     " not divisible by groups " + std::to_string(o.groups));
  }
  const std::size_t fan_in = in / o.groups * kernel * kernel;
  weight = &ps.add(name + ".weight", uniform_init<T>({out, in / o.groups, kernel, kernel}, fan_in, rng));
  if (with_bias) bias = &ps.add(name + ".bias", uniform_init<T>({out}, fan_in, rng));
}

template <class T>
Var<T> Conv2d<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  auto w = ctx.graph.parameter(*weight);
  if (bias) return num::conv2d(x, w, ctx.graph.parameter(*bias), opts);
  return num::conv2d<T>(x, w, std::nullopt, opts);
}

template <class T>
ConvTranspose2d<T>::ConvTranspose2d(ParameterSet<T>& ps, const std::string& name, std::size_t in,
                                    std::size_t out, std::size_t kernel, std::size_t s, std::mt19937_64& rng)
    : stride(s) {
  const std::size_t fan_in = in * kernel * kernel;
  weight = &ps.add(name + ".weight", uniform_init<T>({in, out, kernel, kernel}, fan_in, rng));
  bias = &ps.add(name + ".bias", uniform_init<T>({out}, fan_in, rng));
}

template <class T>
Var<T> ConvTranspose2d<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  return num::conv_transpose2d(x, ctx.graph.parameter(*weight), ctx.graph.parameter(*bias), stride);
}

template <class T>
Conv3d<T>::Conv3d(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t kd, std::size_t kh, std::size_t kw, num::Conv3dPadding p, std::mt19937_64& rng)
    : padding(p) {
  const std::size_t fan_in = in * kd * kh * kw;
  weight = &ps.add(name + ".weight", uniform_init<T>({out, in, kd, kh, kw}, fan_in, rng));
  bias = &ps.add(name + ".bias", uniform_init<T>({out}, fan_in, rng));
}

template <class T>
Var<T> Conv3d<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  return num::conv3d(x, ctx.graph.parameter(*weight), ctx.graph.parameter(*bias), padding);
}

template <class T>
Linear<T>::Linear(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                  std::mt19937_64& rng, bool with_bias) {
  weight = &ps.add(name + ".weight", uniform_init<T>({in, out}, in, rng));
  if (with_bias) bias = &ps.add(name + ".bias", uniform_init<T>({out}, in, rng));
}

template <class T>
Var<T> Linear<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  auto w = ctx.graph.parameter(*weight);
  if (bias) return num::linear(x, w, ctx.graph.parameter(*bias));
  return num::linear<T>(x, w, std::nullopt);
}

template <class T>
BatchNorm<T>::BatchNorm(ParameterSet<T>& ps, const std::string& name, std::size_t channels) {
  gamma = &ps.add(name + ".gamma", Tensor<T>({channels}, T(1)));
  beta = &ps.add(name + ".beta", Tensor<T>({channels}, T(0)));
  running_mean = &ps.add_buffer(name + ".running_mean", Tensor<T>({channels}, T(0)));
  running_var = &ps.add_buffer(name + ".running_var", Tensor<T>({channels}, T(1)));
}

template <class T>
Var<T> BatchNorm<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  return num::batch_norm(x, ctx.graph.parameter(*gamma), ctx.graph.parameter(*beta), *running_mean, *running_var,
                         ctx.training);
}

#define FDP_INSTANTIATE_LAYERS(T)                                                      \
  template class ParameterSet<T>;                                                      \
  template Tensor<T> uniform_init<T>(Shape, std::size_t, std::mt19937_64&);            \
  template class Conv2d<T>;                                                            \
  template class ConvTranspose2d<T>;                                                   \
  template class Conv3d<T>;                                                            \
  template class Linear<T>;                                                            \
  template class BatchNorm<T>;

FDP_INSTANTIATE_LAYERS(float)
FDP_INSTANTIATE_LAYERS(double)

}  // namespace fdp::model
