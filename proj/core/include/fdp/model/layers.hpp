#pragma once

#include <cstddef>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "fdp/numerics/ops.hpp"

namespace fdp::model {

using num::Graph;
using num::Parameter;
using num::Shape;
using num::Tensor;
using num::Var;

// Owns every trainable tensor and running buffer of a model. Addresses are
// stable, so layers keep raw pointers into the set.
template <class T>
class ParameterSet {
 public:
  struct Buffer {
    std::string name;
    Tensor<T> value;
  };

  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter<T>& add(std::string name, Tensor<T> value);
  Tensor<T>& add_buffer(std::string name, Tensor<T> value);

  std::deque<Parameter<T>>& parameters() noexcept { return params_; }
  const std::deque<Parameter<T>>& parameters() const noexcept { return params_; }
  std::deque<Buffer>& buffers() noexcept { return buffers_; }
  const std::deque<Buffer>& buffers() const noexcept { return buffers_; }

  std::vector<Parameter<T>*> pointers();
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  void check_unique(const std::string& name) const;

  std::deque<Parameter<T>> params_;
  std::deque<Buffer> buffers_;
};

// Copies values (parameters and buffers, matched by position and name) from
// one set into an identically built set of another precision.
template <class Dst, class Src>
void copy_parameters(const ParameterSet<Src>& src, ParameterSet<Dst>& dst) {
  auto& dp = dst.parameters();
  auto& db = dst.buffers();
  if (dp.size() != src.parameters().size() || db.size() != src.buffers().size()) {
    throw UsageError("copy_parameters: parameter sets differ in layout");
  }
  for (std::size_t i = 0; i < dp.size(); ++i) {
    const auto& s = src.parameters()[i];
    if (dp[i].name != s.name || dp[i].value.dims() != s.value.dims()) {
      throw UsageError("copy_parameters: mismatch at " + s.name);
    }
    dp[i].value = s.value.template cast<Dst>();
  }
  for (std::size_t i = 0; i < db.size(); ++i) {
    const auto& s = src.buffers()[i];
    if (db[i].name != s.name || db[i].value.dims() != s.value.dims()) {
      throw UsageError("copy_parameters: mismatch at " + s.name);
    }
    db[i].value = s.value.template cast<Dst>();
  }
}

// Per-forward state: the graph being built, train/eval mode and the dropout
// generator (required whenever training with a nonzero dropout rate).
template <class T>
struct Context {
  Graph<T>& graph;
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases alike.
template <class T>
Tensor<T> uniform_init(Shape dims, std::size_t fan_in, std::mt19937_64& rng);

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
         num::Conv2dOptions opts, std::mt19937_64& rng, bool bias = true);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;

  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  num::Conv2dOptions opts;
};

template <class T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t kernel, std::size_t stride, std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;

  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  std::size_t stride = 1;
};

template <class T>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, std::size_t kd,
         std::size_t kh, std::size_t kw, num::Conv3dPadding padding, std::mt19937_64& rng);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;

  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  num::Conv3dPadding padding;
};

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
         bool bias = true);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;

  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
};

// gamma starts at 1, beta at 0; running mean 0, running variance 1.
template <class T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParameterSet<T>& ps, const std::string& name, std::size_t channels);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;

  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
  Tensor<T>* running_mean = nullptr;
  Tensor<T>* running_var = nullptr;
};

}  // namespace fdp::model
