#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdp/app/checkpoint.hpp"
#include "fdp/app/trainer.hpp"
#include "fdp/eval/protocols.hpp"

namespace fdp::app {

using LogSink = std::function<void(const std::string&)>;

struct FoldOutcome {
  eval::Fold fold;
  std::vector<std::string> test_ids;
  std::vector<ClipResult> results;
  std::vector<EpochStats> log;
};

struct RunOutcome {
  std::string protocol;
  RunConfig config;
  std::vector<std::string> classes;
  std::vector<FoldOutcome> folds;
};

struct MetricSummary {
  std::size_t samples = 0;
  double accuracy = 0;
  double f1 = 0;
  std::optional<double> uar;  // undefined when a class has no test samples
  double war = 0;
  double average_mse = 0;
  double baseline_mse = 0;
  double rank_loss = 0;          // mean per clip
  double monotone_fraction = 0;  // clips whose scores rise strictly
  eval::ConfusionCounts confusion;
};

MetricSummary summarize(std::span<const ClipResult> results, std::size_t classes, eval::F1Average f1);
// Pooled or per-fold-mean summary over all folds, per cfg.aggregation.
MetricSummary aggregate(const RunOutcome& run);

// Worker threads for independent folds: FDP_THREADS when set (>= 1), else the
// hardware concurrency; always 1 under the determinism flag.
std::size_t worker_count(bool deterministic);

// Trains a fresh model per fold on its training rows and evaluates it on its
// test rows. Epoch lines go to `log`, prefixed with the fold tag, in fold order.
RunOutcome run_folds(const RunConfig& cfg, std::span<const data::VideoClip> clips,
                     const std::vector<std::string>& classes, const eval::FoldPlan& plan, const std::string& protocol,
                     const LogSink& log = {});

// Trains on one clip set and evaluates on another.
RunOutcome run_cross(const RunConfig& cfg, std::span<const data::VideoClip> train,
                     std::span<const data::VideoClip> test, const std::vector<std::string>& classes,
                     const LogSink& log = {});

// Evaluates a trained checkpoint; refuses a manifest whose class table differs.
RunOutcome evaluate_checkpoint(const Checkpoint& ck, std::span<const data::VideoClip> clips,
                               const std::vector<std::string>& classes);

// JSON document with per-fold and aggregate metrics, confusion matrices,
// seed and config hash.
std::string report_json(const RunOutcome& run);

}  // namespace fdp::app
