#include "fdp/app/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fdp/data/sampling.hpp"
#include "fdp/model/heads.hpp"
#include "fdp/oracle/dynamic_image.hpp"

namespace fdp::app {

std::string format_epoch(const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f mer %.6f dic %.6f rank %.6f acc %.4f", s.epoch, s.loss, s.mer,
                s.dic, s.rank, s.accuracy);
  return buf;
}

ClipInput prepare_clip(const data::VideoClip& clip, const RunConfig& cfg, std::mt19937_64* rng) {
  const std::size_t L = clip.frames.size();
  const std::size_t offset = rng ? data::draw_offset(L, cfg.frames, *rng) : 0;
  const auto idx = data::sample_clip(L, cfg.frames, offset);
  const auto window = rng && cfg.augment ? data::draw_train_window(cfg.preprocess, *rng) : data::eval_window(cfg.preprocess);
  ClipInput in;
  in.frames.reserve(idx.size());
  for (auto i : idx) in.frames.push_back(data::apply_window(clip.frames[i], cfg.preprocess, window));
  // A single sampled frame has no motion; the oracle degenerates to mid-gray.
  in.target = in.frames.size() >= 2 ? oracle::dynamic_image(in.frames)
                                     : data::Image(1, cfg.preprocess.crop, cfg.preprocess.crop, 0.5);
  return in;
}

Batch make_batch(std::span<const ClipInput> inputs, std::span<const std::size_t> labels) {
  if (inputs.empty() || inputs.size() != labels.size()) throw UsageError("make_batch: empty or mismatched batch");
  const auto& f0 = inputs.front().frames.front();
  const std::size_t b = inputs.size(), t = inputs.front().frames.size();
  const std::size_t c = f0.channels, h = f0.height, w = f0.width;
  Batch batch{num::Tensor<float>({b, t, c, h, w}), num::Tensor<float>({b, 1, h, w}),
              std::vector<std::size_t>(labels.begin(), labels.end())};
  float* dst = batch.clips.ptr();
  float* tgt = batch.targets.ptr();
  for (const auto& in : inputs) {
    for (const auto& f : in.frames) dst = std::transform(f.pixels.begin(), f.pixels.end(), dst, [](double v) {
      return static_cast<float>(v);
    });
    tgt = std::transform(in.target.pixels.begin(), in.target.pixels.end(), tgt,
                         [](double v) { return static_cast<float>(v); });
  }
  return batch;
}

void check_clips(std::span<const data::VideoClip> clips, const RunConfig& cfg, std::size_t num_classes) {
  if (clips.empty()) throw DataError("no clips to process");
  for (const auto& c : clips) {
    if (c.frames.empty()) throw DataError("clip '" + c.clip_id + "' has no frames");
    const auto& f = c.frames.front();
    if (f.channels != cfg.encoder.in_channels || f.height != cfg.preprocess.source_extent ||
        f.width != cfg.preprocess.source_extent) {
      throw DataError("clip '" + c.clip_id + "' frames are " + std::to_string(f.channels) + "x" +
                      std::to_string(f.height) + "x" + std::to_string(f.width) + ", expected " +
                      std::to_string(cfg.encoder.in_channels) + "x" + std::to_string(cfg.preprocess.source_extent) +
                      "x" + std::to_string(cfg.preprocess.source_extent));
    }
    if (c.label >= num_classes) {
      throw DataError("clip '" + c.clip_id + "' label " + std::to_string(c.label) + " exceeds the " +
                      std::to_string(num_classes) + " known classes");
    }
  }
}

namespace {

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<double> row_of(const num::Tensor<float>& t, std::size_t row) {
  const std::size_t n = t.dim(1);
  return {t.ptr() + row * n, t.ptr() + (row + 1) * n};
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, std::size_t num_classes)
    : cfg_(cfg),
      num_classes_(num_classes),
      model_(std::make_unique<model::FdpModel<float>>((cfg.validate(), cfg.model(num_classes)), cfg.seed)),
      adam_(model_->params().pointers(), AdamOptions{cfg.learning_rate}),
      data_rng_(derived_seed(cfg.seed, 1)),
      dropout_rng_(derived_seed(cfg.seed, 2)) {}

EpochStats Trainer::train_epoch(std::span<const data::VideoClip> clips) {
  check_clips(clips, cfg_, num_classes_);
  ++epoch_;
  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), data_rng_);

  EpochStats st;
  st.epoch = epoch_;
  std::size_t correct = 0;
  const auto weights = cfg_.weights();
  for (std::size_t start = 0, batch_no = 1; start < order.size(); start += cfg_.batch_size, ++batch_no) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    std::vector<ClipInput> inputs;
    std::vector<std::size_t> labels;
    for (std::size_t i = start; i < end; ++i) {
      inputs.push_back(prepare_clip(clips[order[i]], cfg_, &data_rng_));
      labels.push_back(clips[order[i]].label);
    }
    const Batch batch = make_batch(inputs, labels);

    num::Graph<float> g;
    model::Context<float> ctx{g, true, &dropout_rng_};
    const auto out = model_->forward(ctx, batch.clips);
    const auto l = model_->losses(out, batch.labels, batch.targets, weights, cfg_.rank_slope);
    const double total = l.total.value()[0];
    if (!std::isfinite(total)) {
      throw NumericalError("non-finite loss at epoch " + std::to_string(epoch_) + " batch " + std::to_string(batch_no));
    }
    model_->params().zero_grad();
    g.backward(l.total);
    adam_.step();

    const double n = static_cast<double>(end - start);
    st.loss += total * n;
    st.mer += l.mer.value()[0] * n;
    st.dic += l.dic.value()[0] * n;
    st.rank += l.rank.value()[0] * n;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      correct += model::argmax(row_of(out.probs.value(), r)) == labels[r];
    }
  }
  const double n = static_cast<double>(clips.size());
  st.loss /= n;
  st.mer /= n;
  st.dic /= n;
  st.rank /= n;
  st.accuracy = static_cast<double>(correct) / n;
  return st;
}

std::vector<EpochStats> Trainer::fit(std::span<const data::VideoClip> clips,
                                     const std::function<bool(const EpochStats&)>& on_epoch) {
  std::vector<EpochStats> log;
  for (std::size_t e = 0; e < cfg_.epochs; ++e) {
    log.push_back(train_epoch(clips));
    if (on_epoch && !on_epoch(log.back())) break;
  }
  return log;
}

std::vector<ClipResult> evaluate(const model::FdpModel<float>& model, const RunConfig& cfg,
                                 std::span<const data::VideoClip> clips) {
  check_clips(clips, cfg, model.config().num_classes);
  std::vector<ClipResult> results;
  results.reserve(clips.size());
  for (std::size_t start = 0; start < clips.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(clips.size(), start + cfg.batch_size);
    std::vector<ClipInput> inputs;
    std::vector<std::size_t> labels;
    for (std::size_t i = start; i < end; ++i) {
      inputs.push_back(prepare_clip(clips[i], cfg, nullptr));
      labels.push_back(clips[i].label);
    }
    const Batch batch = make_batch(inputs, labels);
    num::Graph<float> g;
    model::Context<float> ctx{g, false, nullptr};
    const auto out = model.forward(ctx, batch.clips);
    const auto& image = out.image.value();
    const std::size_t plane = cfg.preprocess.crop * cfg.preprocess.crop;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      ClipResult res;
      res.label = labels[r];
      res.probs = row_of(out.probs.value(), r);
      res.predicted = model::argmax(res.probs);
      res.scores = row_of(out.scores.value(), r);
      res.monotone = true;
      for (std::size_t k = 0; k < res.scores.size(); ++k) {
        res.rank_loss += std::abs(cfg.rank_slope * static_cast<double>(k) - res.scores[k]);
        if (k && !(res.scores[k] > res.scores[k - 1])) res.monotone = false;
      }
      data::Image pred(1, cfg.preprocess.crop, cfg.preprocess.crop);
      std::copy(image.ptr() + r * plane, image.ptr() + (r + 1) * plane, pred.pixels.begin());
      const auto& target = inputs[r].target;
      res.mse = oracle::image_mse(pred, target);
      res.baseline_mse = oracle::image_mse(data::Image(1, target.height, target.width, 0.5), target);
      results.push_back(std::move(res));
    }
  }
  return results;
}

}  // namespace fdp::app
