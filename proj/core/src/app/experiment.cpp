#include "fdp/app/experiment.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "json.hpp"

namespace fdp::app {
namespace {

std::vector<data::VideoClip> pick(std::span<const data::VideoClip> clips, const std::vector<std::size_t>& rows) {
  std::vector<data::VideoClip> out;
  out.reserve(rows.size());
  for (auto i : rows) out.push_back(clips[i]);
  return out;
}

FoldOutcome run_fold(const RunConfig& cfg, std::span<const data::VideoClip> train,
                     std::span<const data::VideoClip> test, std::size_t classes, eval::Fold fold,
                     const LogSink& stream) {
  FoldOutcome out;
  out.fold = std::move(fold);
  Trainer trainer(cfg, classes);
  out.log = trainer.fit(train, [&](const EpochStats& s) {
    if (stream) stream("fold " + out.fold.held_out + " " + format_epoch(s));
    return true;
  });
  out.results = evaluate(trainer.model(), cfg, test);
  for (const auto& c : test) out.test_ids.push_back(c.clip_id);
  return out;
}

nlohmann::json summary_json(const MetricSummary& s) {
  nlohmann::json j;
  j["samples"] = s.samples;
  j["accuracy"] = s.accuracy;
  j["f1"] = s.f1;
  j["uar"] = s.uar ? nlohmann::json(*s.uar) : nlohmann::json(nullptr);
  j["war"] = s.war;
  j["average_mse"] = s.average_mse;
  j["baseline_mse_constant_half"] = s.baseline_mse;
  j["rank_loss"] = s.rank_loss;
  j["monotone_fraction"] = s.monotone_fraction;
  j["confusion"] = s.confusion.rows();
  return j;
}

}  // namespace

MetricSummary summarize(std::span<const ClipResult> results, std::size_t classes, eval::F1Average f1) {
  MetricSummary s;
  std::vector<std::size_t> pred, truth;
  for (const auto& r : results) {
    pred.push_back(r.predicted);
    truth.push_back(r.label);
    s.average_mse += r.mse;
    s.baseline_mse += r.baseline_mse;
    s.rank_loss += r.rank_loss;
    s.monotone_fraction += r.monotone ? 1.0 : 0.0;
  }
  s.samples = results.size();
  s.confusion = eval::confusion(pred, truth, classes);
  if (s.samples == 0) return s;
  s.average_mse /= static_cast<double>(s.samples);
  s.baseline_mse /= static_cast<double>(s.samples);
  s.rank_loss /= static_cast<double>(s.samples);
  s.monotone_fraction /= static_cast<double>(s.samples);
  s.war = eval::war(s.confusion);
  s.accuracy = s.war;
  s.f1 = eval::f1_score(s.confusion, f1);
  bool all_present = true;
  for (std::size_t j = 0; j < classes; ++j) all_present = all_present && s.confusion.row_sum(j) > 0;
  if (all_present) s.uar = eval::uar(s.confusion);
  return s;
}

MetricSummary aggregate(const RunOutcome& run) {
  const std::size_t m = run.classes.size();
  if (run.config.aggregation == Aggregation::kPooled || run.folds.size() == 1) {
    std::vector<ClipResult> all;
    for (const auto& f : run.folds) all.insert(all.end(), f.results.begin(), f.results.end());
    return summarize(all, m, run.config.f1_average);
  }
  MetricSummary mean;
  mean.confusion = eval::ConfusionCounts(m);
  double uar_sum = 0;
  std::size_t uar_n = 0, folds = 0;
  for (const auto& f : run.folds) {
    const auto s = summarize(f.results, m, run.config.f1_average);
    if (s.samples == 0) continue;
    ++folds;
    mean.samples += s.samples;
    mean.accuracy += s.accuracy;
    mean.war += s.war;
    mean.f1 += s.f1;
    mean.average_mse += s.average_mse;
    mean.baseline_mse += s.baseline_mse;
    mean.rank_loss += s.rank_loss;
    mean.monotone_fraction += s.monotone_fraction;
    mean.confusion += s.confusion;
    if (s.uar) {
      uar_sum += *s.uar;
      ++uar_n;
    }
  }
  if (folds == 0) return mean;
  const double n = static_cast<double>(folds);
  mean.accuracy /= n;
  mean.war /= n;
  mean.f1 /= n;
  mean.average_mse /= n;
  mean.baseline_mse /= n;
  mean.rank_loss /= n;
  mean.monotone_fraction /= n;
  if (uar_n) mean.uar = uar_sum / static_cast<double>(uar_n);
  return mean;
}

std::size_t worker_count(bool deterministic) {
  if (deterministic) return 1;
  if (const char* env = std::getenv("FDP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw UsageError("FDP_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RunOutcome run_folds(const RunConfig& cfg, std::span<const data::VideoClip> clips,
                     const std::vector<std::string>& classes, const eval::FoldPlan& plan, const std::string& protocol,
                     const LogSink& log) {
  cfg.validate();
  check_clips(clips, cfg, classes.size());
  RunOutcome run{protocol, cfg, classes, std::vector<FoldOutcome>(plan.size())};
  const std::size_t workers = std::min(worker_count(cfg.deterministic), plan.size());

  if (workers <= 1) {
    for (std::size_t f = 0; f < plan.size(); ++f) {
      run.folds[f] = run_fold(cfg, pick(clips, plan[f].train), pick(clips, plan[f].test), classes.size(), plan[f], log);
    }
    return run;
  }

  // Folds run concurrently; their logs are buffered and emitted in fold order.
  std::vector<std::vector<std::string>> lines(plan.size());
  std::vector<std::exception_ptr> errors(plan.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t f; (f = next++) < plan.size();) {
      try {
        run.folds[f] = run_fold(cfg, pick(clips, plan[f].train), pick(clips, plan[f].test), classes.size(), plan[f],
                                [&lines, f](const std::string& s) { lines[f].push_back(s); });
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (std::size_t f = 0; f < plan.size(); ++f) {
    if (errors[f]) std::rethrow_exception(errors[f]);
    if (log)
      for (const auto& s : lines[f]) log(s);
  }
  return run;
}

RunOutcome run_cross(const RunConfig& cfg, std::span<const data::VideoClip> train,
                     std::span<const data::VideoClip> test, const std::vector<std::string>& classes,
                     const LogSink& log) {
  cfg.validate();
  if (test.empty()) throw DataError("cross: test set is empty");
  RunOutcome run{"cross", cfg, classes, {}};
  run.folds.push_back(run_fold(cfg, train, test, classes.size(), eval::Fold{"cross", {}, {}}, log));
  return run;
}

RunOutcome evaluate_checkpoint(const Checkpoint& ck, std::span<const data::VideoClip> clips,
                               const std::vector<std::string>& classes) {
  if (classes != ck.classes) {
    throw DataError("checkpoint was trained on " + std::to_string(ck.classes.size()) +
                    " classes that do not match the manifest's " + std::to_string(classes.size()));
  }
  if (clips.empty()) throw DataError("evaluation set is empty");
  RunOutcome run{"checkpoint", ck.config, classes, {}};
  FoldOutcome f;
  f.fold.held_out = "all";
  f.results = evaluate(*ck.model, ck.config, clips);
  for (const auto& c : clips) f.test_ids.push_back(c.clip_id);
  run.folds.push_back(std::move(f));
  return run;
}

std::string report_json(const RunOutcome& run) {
  nlohmann::json j;
  j["protocol"] = run.protocol;
  j["seed"] = run.config.seed;
  j["config_hash"] = config_hash(run.config);
  j["aggregation"] = run.config.aggregation == Aggregation::kPooled ? "pooled" : "fold_mean";
  j["f1_average"] = run.config.f1_average == eval::F1Average::kMacro ? "macro" : "weighted";
  j["classes"] = run.classes;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : run.folds) {
    auto fj = summary_json(summarize(f.results, run.classes.size(), run.config.f1_average));
    fj["held_out"] = f.fold.held_out;
    fj["test_clips"] = f.test_ids;
    fj["epochs_trained"] = f.log.size();
    if (!f.log.empty()) fj["final_train_loss"] = f.log.back().loss;
    j["folds"].push_back(std::move(fj));
  }
  j["summary"] = summary_json(aggregate(run));
  return j.dump(2) + "\n";
}

}  // namespace fdp::app
