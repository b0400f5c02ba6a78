#pragma once

#include <cstddef>
#include <vector>

#include "fdp/numerics/graph.hpp"

namespace fdp::app {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected adaptive moment estimation over a fixed parameter list.
template <class T>
class Adam {
 public:
  Adam(std::vector<num::Parameter<T>*> params, AdamOptions opts = {});
  void step();
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<num::Parameter<T>*> params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace fdp::app
