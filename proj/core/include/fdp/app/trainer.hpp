#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fdp/app/adam.hpp"
#include "fdp/app/config.hpp"
#include "fdp/data/clip.hpp"

namespace fdp::app {

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0, mer = 0, dic = 0, rank = 0;
  double accuracy = 0;  // over the training forward passes of the epoch
};

// One log line; fixed formatting so identical runs give identical bytes.
std::string format_epoch(const EpochStats& s);

// t sampled, cropped frames of one clip and the oracle dynamic image of
// exactly those frames. A null rng selects evaluation sampling (offset 0,
// central crop, no flip).
struct ClipInput {
  std::vector<data::Image> frames;
  data::Image target;
};

ClipInput prepare_clip(const data::VideoClip& clip, const RunConfig& cfg, std::mt19937_64* rng);

struct Batch {
  num::Tensor<float> clips;    // B x t x C x S x S
  num::Tensor<float> targets;  // B x 1 x S x S
  std::vector<std::size_t> labels;
};

Batch make_batch(std::span<const ClipInput> inputs, std::span<const std::size_t> labels);

// Checks extents, channel count and labels against the run before training.
void check_clips(std::span<const data::VideoClip> clips, const RunConfig& cfg, std::size_t num_classes);

class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::size_t num_classes);

  EpochStats train_epoch(std::span<const data::VideoClip> clips);
  // Runs cfg.epochs epochs, calling on_epoch after each; stops early when it returns false.
  std::vector<EpochStats> fit(std::span<const data::VideoClip> clips,
                              const std::function<bool(const EpochStats&)>& on_epoch = {});

  model::FdpModel<float>& model() noexcept { return *model_; }
  const model::FdpModel<float>& model() const noexcept { return *model_; }
  const RunConfig& config() const noexcept { return cfg_; }

 private:
  RunConfig cfg_;
  std::size_t num_classes_;
  std::unique_ptr<model::FdpModel<float>> model_;
  Adam<float> adam_;
  std::mt19937_64 data_rng_;
  std::mt19937_64 dropout_rng_;
  std::size_t epoch_ = 0;
};

struct ClipResult {
  std::size_t label = 0;
  std::size_t predicted = 0;
  std::vector<double> probs;
  std::vector<double> scores;  // rank score per sampled frame
  double mse = 0;              // predicted dynamic image vs oracle
  double baseline_mse = 0;     // constant 0.5 image vs oracle
  double rank_loss = 0;        // sum_k |slope * k - score_k|
  bool monotone = false;       // scores strictly increasing in frame order
};

// Evaluation-mode forward passes over the clips, in order.
std::vector<ClipResult> evaluate(const model::FdpModel<float>& model, const RunConfig& cfg,
                                 std::span<const data::VideoClip> clips);

}  // namespace fdp::app
