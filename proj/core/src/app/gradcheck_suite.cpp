#include "fdp/app/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <random>

#include "fdp/numerics/gradcheck.hpp"

namespace fdp::app {
namespace {

using num::Graph;
using num::Shape;
using num::Tensor;
using num::Var;

template <class T>
Tensor<T> random_tensor(const Shape& dims, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(dims);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

// Fixed random weighting turns any output into a scalar with a generic upstream gradient.
template <class T>
Var<T> probe(const Var<T>& y) {
  std::mt19937_64 rng(99);
  auto w = y.graph().constant(random_tensor<T>(y.dims(), rng));
  return num::sum(num::mul(y, w));
}

struct OpCase {
  const char* name;
  std::vector<Shape> inputs;
  num::ScalarFunction<double> fn;
};

const std::vector<OpCase>& op_cases() {
  using namespace num;
  static Tensor<double> rm(Shape{3}), rv(Shape{3}, 1.0);
  static const std::vector<OpCase> cases = {
      {"add_broadcast", {{2, 3, 4}, {1, 3, 1}}, [](auto&, const auto& v) { return probe(add(v[0], v[1])); }},
      {"sub", {{2, 3}, {2, 3}}, [](auto&, const auto& v) { return probe(sub(v[0], v[1])); }},
      {"mul_broadcast", {{2, 3, 4}, {2, 1, 4}}, [](auto&, const auto& v) { return probe(mul(v[0], v[1])); }},
      {"relu", {{4, 5}}, [](auto&, const auto& v) { return probe(relu(v[0])); }},
      {"leaky_relu", {{4, 5}}, [](auto&, const auto& v) { return probe(leaky_relu(v[0], 0.01)); }},
      {"sigmoid", {{4, 5}}, [](auto&, const auto& v) { return probe(sigmoid(v[0])); }},
      {"abs", {{4, 5}}, [](auto&, const auto& v) { return probe(abs(v[0])); }},
      {"matmul", {{3, 4}, {4, 2}}, [](auto&, const auto& v) { return probe(matmul(v[0], v[1])); }},
      {"bmm", {{2, 3, 4}, {2, 4, 5}}, [](auto&, const auto& v) { return probe(bmm(v[0], v[1])); }},
      {"bmm_transposed", {{2, 3, 4}, {2, 5, 4}}, [](auto&, const auto& v) { return probe(bmm(v[0], v[1], true)); }},
      {"softmax", {{3, 6}}, [](auto&, const auto& v) { return probe(softmax(v[0])); }},
      {"linear", {{3, 4}, {4, 2}, {2}}, [](auto&, const auto& v) { return probe(linear(v[0], v[1], v[2])); }},
      {"conv2d", {{2, 2, 5, 5}, {3, 2, 3, 3}, {3}},
       [](auto&, const auto& v) { return probe(conv2d(v[0], v[1], v[2], {.stride = 2, .padding = 1})); }},
      {"conv2d_grouped", {{1, 4, 4, 4}, {4, 2, 3, 3}},
       [](auto&, const auto& v) { return probe(conv2d(v[0], v[1], std::nullopt, {.padding = 1, .groups = 2})); }},
      {"conv2d_floor_mode", {{1, 2, 6, 6}, {2, 2, 3, 3}, {2}},
       [](auto&, const auto& v) {
         return probe(conv2d(v[0], v[1], v[2], {.stride = 2, .padding = 1, .floor_mode = true}));
       }},
      {"pointwise_conv", {{2, 3, 4, 4}, {5, 3, 1, 1}, {5}},
       [](auto&, const auto& v) { return probe(conv2d(v[0], v[1], v[2])); }},
      {"conv_transpose2d", {{2, 3, 3, 3}, {3, 2, 2, 2}, {2}},
       [](auto&, const auto& v) { return probe(conv_transpose2d(v[0], v[1], v[2], 2)); }},
      {"conv3d", {{2, 1, 3, 4, 4}, {2, 1, 3, 3, 3}, {2}},
       [](auto&, const auto& v) { return probe(conv3d(v[0], v[1], v[2], {0, 1, 1})); }},
      {"dropout", {{3, 8}},
       [](auto&, const auto& v) {
         std::mt19937_64 mask(5);
         return probe(dropout(v[0], 0.25, true, mask));
       }},
      {"max_pool2d", {{2, 2, 4, 4}}, [](auto&, const auto& v) { return probe(max_pool2d(v[0], 2, 2)); }},
      {"global_avg_pool", {{2, 3, 4, 4}}, [](auto&, const auto& v) { return probe(global_avg_pool(v[0])); }},
      {"batch_norm_train", {{4, 3, 2, 2}, {3}, {3}},
       [](auto&, const auto& v) { return probe(batch_norm(v[0], v[1], v[2], rm, rv, true)); }},
      {"batch_norm_eval", {{4, 3, 2, 2}, {3}, {3}},
       [](auto&, const auto& v) { return probe(batch_norm(v[0], v[1], v[2], rm, rv, false)); }},
      {"concat", {{2, 2, 3}, {2, 1, 3}}, [](auto&, const auto& v) { return probe(concat<double>({v[0], v[1]}, 1)); }},
      {"slice", {{2, 5, 3}}, [](auto&, const auto& v) { return probe(slice(v[0], 1, 1, 4)); }},
      {"reshape", {{2, 6}}, [](auto&, const auto& v) { return probe(reshape(v[0], Shape{3, 4})); }},
      {"permute", {{2, 3, 4}}, [](auto&, const auto& v) { return probe(permute(v[0], {2, 0, 1})); }},
      {"mean", {{3, 3}}, [](auto&, const auto& v) { return scale(mean(mul(v[0], v[0])), 3.0); }},
      {"mse", {{2, 8}, {2, 8}}, [](auto&, const auto& v) { return mse(v[0], v[1]); }},
      {"nll_from_probs", {{2, 3}},
       [](auto&, const auto& v) {
         const std::vector<std::size_t> labels{1, 0};
         return nll_from_probs(softmax(v[0]), labels);
       }},
  };
  return cases;
}

}  // namespace

std::vector<std::string> op_check_names() {
  std::vector<std::string> names;
  for (const auto& c : op_cases()) names.push_back(c.name);
  return names;
}

GradCheckEntry check_op(std::size_t index, std::uint64_t seed) {
  const auto& c = op_cases().at(index);
  std::mt19937_64 rng(seed);
  std::vector<Tensor<double>> point;
  for (const auto& s : c.inputs) point.push_back(random_tensor<double>(s, rng));
  const auto r = num::grad_check<double>(c.fn, point, {.eps = 1e-6});
  return {c.name, "double", r.max_rel_error, kOpTolerance};
}

std::vector<GradCheckEntry> check_all_ops(std::size_t points) {
  std::vector<GradCheckEntry> out;
  for (std::size_t i = 0; i < op_cases().size(); ++i) {
    GradCheckEntry worst = check_op(i, 1000);
    for (std::size_t p = 1; p < points; ++p) {
      const auto e = check_op(i, 1000 + p);
      if (e.max_rel_error > worst.max_rel_error) worst = e;
    }
    out.push_back(worst);
  }
  return out;
}

model::ModelConfig gradcheck_model_config() {
  model::ModelConfig cfg;
  cfg.encoder.input_size = 16;
  cfg.encoder.stem_channels = 4;
  cfg.encoder.stage_channels = {8, 16};
  cfg.encoder.patches = {2, 2};
  cfg.encoder.num_local = 1;
  cfg.encoder.num_global = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.dropout = 0;
  cfg.frames = 3;
  cfg.dyn_channels = 2;
  cfg.mer_hidden = 6;
  cfg.num_classes = 3;
  cfg.dic.channels = {4, 4};
  cfg.dic.up_channels = {4, 2};
  return cfg;
}

GradCheckEntry check_full_loss(const model::ModelConfig& cfg, std::uint64_t seed) {
  model::FdpModel<float> m(cfg, seed);
  model::FdpModel<double> twin(cfg, seed);
  model::copy_parameters(m.params(), twin.params());
  std::mt19937_64 rng(seed + 30);
  const std::size_t s = cfg.crop(), c = cfg.encoder.in_channels;
  const auto clips = random_tensor<float>({2, cfg.frames, c, s, s}, rng, 0, 1);
  const auto targets = random_tensor<float>({2, 1, s, s}, rng, 0, 1);
  std::vector<std::size_t> labels{0, cfg.num_classes - 1};
  auto loss = [&](Graph<float>& g) {
    model::Context<float> ctx{g, true, nullptr};
    auto out = m.forward(ctx, clips);
    return m.losses(out, labels, targets, model::LossWeights{}, 1.0).total;
  };
  auto twin_loss = [&](Graph<double>& g) {
    model::Context<double> ctx{g, true, nullptr};
    auto out = twin.forward(ctx, clips.cast<double>());
    return twin.losses(out, labels, targets.cast<double>(), model::LossWeights{}, 1.0).total;
  };
  const auto r = num::grad_check_single_vs_double(loss, m.params().pointers(), twin_loss, twin.params().pointers(),
                                                  {.max_coords_per_tensor = 8, .seed = seed});
  return {"full_loss", "single", r.max_rel_error, kModelTolerance};
}

std::vector<GradCheckEntry> run_gradcheck_suite(std::size_t points) {
  auto out = check_all_ops(points);
  out.push_back(check_full_loss(gradcheck_model_config(), 2));
  return out;
}

}  // namespace fdp::app
