#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "fdp/numerics/graph.hpp"

// Differentiable operations over Graph nodes. Image-like tensors are laid out
// N x C x H x W (N x C x D x H x W for volumes).
namespace fdp::num {

// Optional operand kept out of template argument deduction so that both
// std::nullopt and a plain Var bind to it.
template <class T>
using OptVar = std::type_identity_t<std::optional<Var<T>>>;

// ---- element-wise ---------------------------------------------------------

// Same-rank broadcasting: every extent of b equals a's or is 1.
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& x, T factor);

template <class T> Var<T> relu(const Var<T>& x);
template <class T> Var<T> leaky_relu(const Var<T>& x, T negative_slope);
template <class T> Var<T> sigmoid(const Var<T>& x);
// d|x|/dx is taken as 0 at x == 0.
template <class T> Var<T> abs(const Var<T>& x);

// Inverted dropout; identity when !training or rate == 0.
template <class T>
Var<T> dropout(const Var<T>& x, T rate, bool training, std::mt19937_64& rng);

// ---- shape ----------------------------------------------------------------

template <class T> Var<T> reshape(const Var<T>& x, Shape dims);
// out.dims[i] = x.dims[perm[i]]
template <class T> Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm);
template <class T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <class T> Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);

// ---- reductions / linear algebra -----------------------------------------

template <class T> Var<T> sum(const Var<T>& x);
template <class T> Var<T> mean(const Var<T>& x);

// a: M x K, b: K x N
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// a: B x M x K, b: B x K x N (or B x N x K when transpose_b)
template <class T> Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

// Softmax over the last axis, computed after subtracting the row maximum.
template <class T> Var<T> softmax(const Var<T>& x);

// x: N x in, weight: in x out, bias: out
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const OptVar<T>& bias);

// ---- convolution / pooling ------------------------------------------------

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  // Accept extents the stride does not tile exactly; trailing rows/columns
  // are dropped. Off by default, where a non-integral output is an error.
  bool floor_mode = false;
};

// x: N x Cin x H x W, weight: Cout x (Cin/groups) x k x k, bias: Cout
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const OptVar<T>& bias,
              Conv2dOptions opts = {});

// Adjoint of conv2d with the same weight tensor: x has weight.dims[0]
// channels, the output weight.dims[1]. Output extent (H-1)*stride - 2*pad + k.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const OptVar<T>& bias,
                        std::size_t stride, std::size_t padding = 0);

struct Conv3dPadding {
  std::size_t depth = 0, height = 0, width = 0;
};

// x: N x Cin x D x H x W, weight: Cout x Cin x kd x kh x kw, stride 1.
template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& weight, const OptVar<T>& bias,
              Conv3dPadding padding = {});

template <class T> Var<T> max_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride);
// N x C x H x W -> N x C
template <class T> Var<T> global_avg_pool(const Var<T>& x);

struct BatchNormState {
  double momentum = 0.1;
  double eps = 1e-5;
};

// Normalises every channel (axis 1) of N x C x ... over all other axes. In
// training mode batch statistics are used and the running buffers are updated
// in place; in eval mode the running buffers define a fixed affine map.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, BatchNormState opts = {});

// ---- losses ---------------------------------------------------------------

// mean over elements of (a - b)^2
template <class T> Var<T> mse(const Var<T>& a, const Var<T>& b);

// probs: N x m probability rows. Mean over rows of -log(max(p[label], 1e-12)).
template <class T>
Var<T> nll_from_probs(const Var<T>& probs, std::span<const std::size_t> labels);

inline constexpr double kLogClamp = 1e-12;

}  // namespace fdp::num
