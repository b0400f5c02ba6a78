#include "fdp/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fdp::num {
namespace {

void validate(const GradCheckOptions& opts) {
  if (!(opts.eps >= 1e-6 && opts.eps <= 1e-2)) throw UsageError("grad_check: eps must lie in [1e-6, 1e-2]");
}

std::vector<std::size_t> probe_indices(std::size_t size, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= size) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <class T>
double scalar_of(const Var<T>& v) {
  const double x = static_cast<double>(v.value()[0]);
  if (!std::isfinite(x)) throw NumericalError("grad_check: non-finite function value");
  return x;
}

void update(GradCheckResult& r, std::size_t tensor, std::size_t index, double analytic, double numeric) {
  const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
  ++r.coords_checked;
  if (err > r.max_rel_error || r.coords_checked == 1) {
    r.max_rel_error = err;
    r.worst_tensor = tensor;
    r.worst_index = index;
    r.analytic_at_worst = analytic;
    r.numeric_at_worst = numeric;
  }
}

}  // namespace

template <class T>
GradCheckResult grad_check(const ScalarFunction<T>& f, std::vector<Tensor<T>> point, const GradCheckOptions& opts) {
  validate(opts);
  auto evaluate = [&](bool with_grad, std::vector<Tensor<T>>* grads) {
    Graph<T> g;
    std::vector<Var<T>> vars;
    vars.reserve(point.size());
    for (const auto& p : point) vars.push_back(g.variable(p));
    Var<T> out = f(g, vars);
    if (out.value().size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
    const double v = scalar_of(out);
    if (with_grad) {
      g.backward(out);
      grads->clear();
      for (const auto& var : vars) grads->push_back(var.grad());
    }
    return v;
  };

  std::vector<Tensor<T>> analytic;
  evaluate(true, &analytic);
  std::mt19937_64 rng(opts.seed);
  GradCheckResult result;
  const T h = static_cast<T>(opts.eps);
  for (std::size_t t = 0; t < point.size(); ++t) {
    for (std::size_t i : probe_indices(point[t].size(), opts.max_coords_per_tensor, rng)) {
      const T orig = point[t][i];
      point[t][i] = orig + h;
      const double hi = static_cast<double>(point[t][i]);
      const double up = evaluate(false, nullptr);
      point[t][i] = orig - h;
      const double lo = static_cast<double>(point[t][i]);
      const double down = evaluate(false, nullptr);
      point[t][i] = orig;
      const double numeric = (up - down) / (hi - lo);
      update(result, t, i, static_cast<double>(analytic[t][i]), numeric);
    }
  }
  return result;
}

template <class T>
GradCheckResult grad_check_tensors(const std::function<Var<T>(Graph<T>&)>& loss, const std::vector<Parameter<T>*>& params,
                                   const GradCheckOptions& opts) {
  validate(opts);
  for (auto* p : params) p->zero_grad();
  {
    Graph<T> g;
    Var<T> out = loss(g);
    if (out.value().size() != 1) throw ShapeError("grad_check: loss must be scalar-valued");
    scalar_of(out);
    g.backward(out);
  }
  std::vector<Tensor<T>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  auto evaluate = [&] {
    Graph<T> g;
    return scalar_of(loss(g));
  };
  std::mt19937_64 rng(opts.seed);
  GradCheckResult result;
  const T h = static_cast<T>(opts.eps);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<T>& value = params[t]->value;
    for (std::size_t i : probe_indices(value.size(), opts.max_coords_per_tensor, rng)) {
      const T orig = value[i];
      value[i] = orig + h;
      const double hi = static_cast<double>(value[i]);
      const double up = evaluate();
      value[i] = orig - h;
      const double lo = static_cast<double>(value[i]);
      const double down = evaluate();
      value[i] = orig;
      // Divide by the step actually taken; it differs from 2*eps in float.
      const double numeric = (up - down) / (hi - lo);
      update(result, t, i, static_cast<double>(analytic[t][i]), numeric);
    }
  }
  for (auto* p : params) p->zero_grad();
  return result;
}

GradCheckResult grad_check_single_vs_double(const std::function<Var<float>(Graph<float>&)>& loss,
                                            const std::vector<Parameter<float>*>& params,
                                            const std::function<Var<double>(Graph<double>&)>& twin,
                                            const std::vector<Parameter<double>*>& twin_params,
                                            const GradCheckOptions& opts) {
  validate(opts);
  if (params.size() != twin_params.size()) throw UsageError("grad_check: twin parameter count differs");
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& a = params[t]->value;
    const auto& b = twin_params[t]->value;
    if (a.dims() != b.dims()) throw ShapeError("grad_check: twin parameter " + params[t]->name + " differs in shape");
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (static_cast<double>(a[i]) != b[i]) {
        throw UsageError("grad_check: twin parameter " + params[t]->name + " differs in value");
      }
    }
  }
  for (auto* p : params) p->zero_grad();
  {
    Graph<float> g;
    Var<float> out = loss(g);
    if (out.value().size() != 1) throw ShapeError("grad_check: loss must be scalar-valued");
    scalar_of(out);
    g.backward(out);
  }
  auto evaluate = [&] {
    Graph<double> g;
    return scalar_of(twin(g));
  };
  std::mt19937_64 rng(opts.seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < twin_params.size(); ++t) {
    Tensor<double>& value = twin_params[t]->value;
    for (std::size_t i : probe_indices(value.size(), opts.max_coords_per_tensor, rng)) {
      const double orig = value[i];
      value[i] = orig + opts.eps;
      const double up = evaluate();
      value[i] = orig - opts.eps;
      const double down = evaluate();
      value[i] = orig;
      update(result, t, i, static_cast<double>(params[t]->grad[i]), (up - down) / (2 * opts.eps));
    }
  }
  for (auto* p : params) p->zero_grad();
  return result;
}

template GradCheckResult grad_check<float>(const ScalarFunction<float>&, std::vector<Tensor<float>>,
                                           const GradCheckOptions&);
template GradCheckResult grad_check<double>(const ScalarFunction<double>&, std::vector<Tensor<double>>,
                                            const GradCheckOptions&);
template GradCheckResult grad_check_tensors<float>(const std::function<Var<float>(Graph<float>&)>&,
                                                   const std::vector<Parameter<float>*>&, const GradCheckOptions&);
template GradCheckResult grad_check_tensors<double>(const std::function<Var<double>(Graph<double>&)>&,
                                                    const std::vector<Parameter<double>*>&, const GradCheckOptions&);

}  // namespace fdp::num
