#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fdp/app/checkpoint.hpp"
#include "fdp/app/config.hpp"
#include "fdp/app/trainer.hpp"
#include "fdp/data/synth.hpp"
#include "fdp/eval/ranksum.hpp"
#include "fdp/numerics/graph.hpp"
#include "fdp/numerics/ops.hpp"
#include "fdp/oracle/dynamic_image.hpp"

namespace {

using namespace fdp;

num::Tensor<float> random_tensor(num::Shape dims, std::uint64_t seed) {
  num::Tensor<float> t(std::move(dims));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

app::RunConfig tiny_config() {
  return app::parse_config(R"(
frames = 4
downsample = 2
crop = 32
stem_channels = 8
stage_channels = 16,64
patches = 2,4
num_local = 1
num_global = 1
heads = 4
dyn_channels = 8
mer_hidden = 64
dic_channels = 16,32,32
dic_up_channels = 16,8
batch_size = 4
learning_rate = 1e-3
)");
}

std::vector<data::VideoClip> small_clips() {
  data::SynthSpec s;
  s.num_subjects = 1;
  s.clips_per_cell = 2;
  s.num_classes = 2;
  return data::synth_clips(s);
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const std::size_t c = static_cast<std::size_t>(state.range(0));
  const auto x0 = random_tensor({8, c, 32, 32}, 1);
  const auto w0 = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : state) {
    num::Graph<float> g;
    auto x = g.variable(x0);
    auto w = g.variable(w0);
    auto y = num::conv2d<float>(x, w, std::nullopt, {1, 1});
    g.backward(num::sum(y));
    benchmark::DoNotOptimize(w.grad());
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  const auto clips = small_clips();
  app::Trainer trainer(tiny_config(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_epoch(clips));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(clips.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
  const auto clips = small_clips();
  const auto cfg = tiny_config();
  app::Trainer trainer(cfg, 2);
  for (auto _ : state) benchmark::DoNotOptimize(app::evaluate(trainer.model(), cfg, clips));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(clips.size()));
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

void BM_DynamicImage(benchmark::State& state) {
  const auto clip = data::synth_clip(data::SynthSpec{}, 0, 0, 0);
  const std::span<const data::Image> frames(clip.frames.data(), static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(oracle::dynamic_image(frames));
}
BENCHMARK(BM_DynamicImage)->Arg(8)->Arg(24);

void BM_RankSumExact(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = static_cast<double>(2 * i);
    b[i] = static_cast<double>(2 * i + 3);
  }
  for (auto _ : state) benchmark::DoNotOptimize(eval::wilcoxon_rank_sum(a, b));
}
BENCHMARK(BM_RankSumExact)->Arg(3)->Arg(6);

void BM_CheckpointRoundTrip(benchmark::State& state) {
  const auto cfg = tiny_config();
  app::Trainer trainer(cfg, 2);
  const std::vector<std::string> classes{"a", "b"};
  for (auto _ : state) {
    const auto bytes = app::encode_checkpoint(cfg, classes, trainer.model());
    benchmark::DoNotOptimize(app::decode_checkpoint(bytes));
  }
}
BENCHMARK(BM_CheckpointRoundTrip)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
