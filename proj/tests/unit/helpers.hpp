#pragma once

#include <cstdint>
#include <random>

#include "fdp/numerics/ops.hpp"

namespace fdp::testing {

template <class T>
num::Tensor<T> random_tensor(num::Shape dims, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  num::Tensor<T> t(std::move(dims));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

// Weighted sum with fixed random weights turns any output into a scalar with a
// non-trivial upstream gradient.
template <class T>
num::Var<T> probe(const num::Var<T>& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = y.graph().constant(random_tensor<T>(y.dims(), rng));
  return num::sum(num::mul(y, w));
}

}  // namespace fdp::testing
