#include "fdp/numerics/graph.hpp"

#include <string>

namespace fdp::num {

template <class T>
Var<T> Graph<T>::push(std::string_view op, Tensor<T> value, bool requires_grad, Backward backward,
                      Tensor<T>* sink) {
  if (!value.all_finite()) {
    throw NumericalError("non-finite value produced by '" + std::string(op) + "' " +
                         shape_string(value.dims()));
  }
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  node.sink = sink;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Graph<T>::record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                        Backward backward) {
  bool rg = false;
  for (const auto& in : inputs) rg = rg || requires_grad(in.id());
  return push(op, std::move(value), rg, std::move(backward), nullptr);
}

template <class T>
Var<T> Graph<T>::record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                        Backward backward) {
  bool rg = false;
  for (const auto& in : inputs) rg = rg || requires_grad(in.id());
  return push(op, std::move(value), rg, std::move(backward), nullptr);
}

template <class T>
Tensor<T>& Graph<T>::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.dims());
  return n.grad;
}

template <class T>
void Graph<T>::backward(const Var<T>& loss) {
  if (&loss.graph() != this) throw UsageError("backward: loss belongs to a different graph");
  if (value(loss.id()).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(value(loss.id()).dims()));
  }
  grad_accumulator(loss.id()).fill(T(1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    // Closures only touch earlier nodes, so n.grad stays put during the call.
    if (n.backward) n.backward(*this, n.grad);
    if (n.sink != nullptr) {
      auto dst = n.sink->data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace fdp::num
