#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fdp/data/sampling.hpp"
#include "fdp/eval/metrics.hpp"
#include "fdp/model/fdp_model.hpp"

namespace fdp::app {

enum class Aggregation { kPooled, kFoldMean };

// Everything a training or evaluation run depends on. The class count is not
// part of it: it comes from the manifest.
struct RunConfig {
  std::size_t frames = 8;
  double lambda_mer = 1.0;
  double lambda_dic = 100.0;
  double lambda_rank = 0.1;
  double rank_slope = 1.0;
  double learning_rate = 1e-4;
  std::size_t batch_size = 36;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  bool deterministic = false;
  bool augment = true;

  data::PreprocessConfig preprocess;
  model::EncoderConfig encoder;
  std::size_t dyn_channels = 32;
  std::size_t mer_hidden = 128;
  model::DicConfig dic;

  eval::F1Average f1_average = eval::F1Average::kMacro;
  Aggregation aggregation = Aggregation::kPooled;
  std::vector<std::string> holdout_subjects;

  void validate() const;
  model::ModelConfig model(std::size_t num_classes) const;
  model::LossWeights weights() const { return {lambda_mer, lambda_dic, lambda_rank}; }
};

// `key = value` lines; `#` starts a comment; lists are comma-separated.
// Unknown keys, repeated keys and malformed values raise UsageError.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig read_config(const std::string& path);
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical text form listing every key; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);
// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace fdp::app
