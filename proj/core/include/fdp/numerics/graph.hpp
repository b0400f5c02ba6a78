#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fdp/numerics/tensor.hpp"

namespace fdp::num {

template <class T>
class Graph;

// Trainable tensor with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.dims()) {}

  void zero_grad() { grad.fill(T(0)); }
};

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives and
// has not been cleared.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape& dims() const { return value().dims(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const;
  // Gradient after Graph::backward; zero tensor if nothing flowed here.
  Tensor<T> grad() const;

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run computation record. Nodes are appended in creation order, which
// is a topological order, and backward replays them in reverse.
template <class T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor<T>& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, {}, nullptr); }

  Var<T> variable(Tensor<T> value) { return push("variable", std::move(value), true, {}, nullptr); }

  // Leaf bound to a parameter; backward adds the node gradient into p.grad.
  Var<T> parameter(Parameter<T>& p) { return push(p.name, p.value, true, {}, &p.grad); }

  // Appends an op result. The node requires grad when any input does; the
  // backward closure is dropped otherwise. Throws NumericalError if the value
  // contains NaN/Inf.
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                Backward backward);
  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                Backward backward);

  // Reverse pass from a single-element loss. Parameter sinks receive their
  // gradients (accumulated, not overwritten).
  void backward(const Var<T>& loss);

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var<T>& v) const { return requires_grad(v.id()); }
  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  const Tensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }

  // Zero-initialised on first access.
  Tensor<T>& grad_accumulator(std::size_t id);
  Tensor<T>& grad_accumulator(const Var<T>& v) { return grad_accumulator(v.id()); }

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
    Tensor<T>* sink = nullptr;
  };

  Var<T> push(std::string_view op, Tensor<T> value, bool requires_grad, Backward backward,
              Tensor<T>* sink);

  // A deque keeps values and gradients at stable addresses while nodes are
  // appended, so references obtained from Var::value() stay valid.
  std::deque<Node> nodes_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

template <class T>
bool Var<T>::requires_grad() const {
  return graph_->requires_grad(id_);
}

template <class T>
Tensor<T> Var<T>::grad() const {
  if (graph_->has_grad(id_)) return graph_->grad(id_);
  return Tensor<T>(value().dims());
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace fdp::num
