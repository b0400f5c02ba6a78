#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fdp/numerics/graph.hpp"

namespace fdp::num {

struct GradCheckOptions {
  double eps = 1e-6;  // must lie in [1e-6, 1e-2]
  // Coordinates probed per input tensor; 0 probes every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0;
  double numeric_at_worst = 0;
  std::size_t coords_checked = 0;
};

// Max over probed coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar function of the given input tensors. The function must build
// its result inside the supplied graph from the supplied leaf variables.
template <class T>
using ScalarFunction = std::function<Var<T>(Graph<T>&, const std::vector<Var<T>>&)>;

template <class T>
GradCheckResult grad_check(const ScalarFunction<T>& f, std::vector<Tensor<T>> point,
                           const GradCheckOptions& opts = {});

// Same check over tensors owned elsewhere (typically model parameters) that
// `loss` reads while building its graph. Tensors are perturbed in place and
// restored before returning.
template <class T>
GradCheckResult grad_check_tensors(const std::function<Var<T>(Graph<T>&)>& loss,
                                   const std::vector<Parameter<T>*>& params, const GradCheckOptions& opts = {});

// Analytic single-precision gradients of `loss` checked against central
// differences of `twin`, a double-precision copy of the same function whose
// parameters must equal the single-precision ones after widening. Finite
// differences of a ReLU/max-pool network in single precision are unusable:
// steps large enough to beat rounding cross activation kinks.
GradCheckResult grad_check_single_vs_double(const std::function<Var<float>(Graph<float>&)>& loss,
                                            const std::vector<Parameter<float>*>& params,
                                            const std::function<Var<double>(Graph<double>&)>& twin,
                                            const std::vector<Parameter<double>*>& twin_params,
                                            const GradCheckOptions& opts = {});

}  // namespace fdp::num
