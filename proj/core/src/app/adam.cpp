#include "fdp/app/adam.hpp"

#include <cmath>

namespace fdp::app {

template <class T>
Adam<T>::Adam(std::vector<num::Parameter<T>*> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  if (!(opts_.learning_rate > 0)) throw UsageError("adam: learning rate must be positive");
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

template <class T>
void Adam<T>::step() {
  ++t_;
  const double b1 = opts_.beta1, b2 = opts_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto value = params_[i]->value.data();
    const auto grad = params_[i]->grad.data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      m[k] = b1 * m[k] + (1 - b1) * g;
      v[k] = b2 * v[k] + (1 - b2) * g * g;
      const double mh = m[k] / c1, vh = v[k] / c2;
      value[k] = static_cast<T>(value[k] - opts_.learning_rate * mh / (std::sqrt(vh) + opts_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace fdp::app
