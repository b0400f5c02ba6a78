// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on stderr.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fdp/app/checkpoint.hpp"
#include "fdp/app/config.hpp"
#include "fdp/app/experiment.hpp"
#include "fdp/app/gradcheck_suite.hpp"
#include "fdp/app/trainer.hpp"
#include "fdp/data/image.hpp"
#include "fdp/data/manifest.hpp"
#include "fdp/data/synth.hpp"
#include "fdp/eval/metrics.hpp"
#include "fdp/eval/protocols.hpp"
#include "fdp/eval/ranksum.hpp"
#include "fdp/oracle/dynamic_image.hpp"

namespace {

using namespace fdp;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); }

// Tiny model shared by the training criteria: two stages, 32x32 crops of
// 2x downsampled frames, four frames per clip.
constexpr const char* kTinyModel = R"(
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
deterministic = true
)";

app::RunConfig overfit_config() {
  return app::parse_config(std::string(kTinyModel) + R"(
batch_size = 1
learning_rate = 2.5e-4
augment = false
dropout = 0
epochs = 200
)");
}

app::RunConfig synthetic_config(std::size_t epochs) {
  return app::parse_config(std::string(kTinyModel) + R"(
batch_size = 4
learning_rate = 1e-3
flip = false
epochs = )" + std::to_string(epochs) + "\n");
}

data::SynthSpec overfit_spec() {
  data::SynthSpec s;
  s.num_subjects = 2;
  s.clips_per_cell = 2;
  return s;
}

struct Dataset {
  data::Manifest manifest;
  std::vector<data::VideoClip> clips;
};

Dataset generate(const data::SynthSpec& spec, const fs::path& dir) {
  fs::remove_all(dir);
  const auto path = data::synth_generate(spec, dir);
  Dataset d;
  d.manifest = data::read_manifest(path);
  d.clips = data::load_clips(path, d.manifest);
  return d;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// 1. Finite-difference checks of every op and of the composed loss.
Outcome gradient_suite(const fs::path&) {
  Stopwatch sw;
  const auto entries = app::run_gradcheck_suite(5);
  const double secs = sw.seconds();
  double worst_op = 0, full = 0;
  std::size_t failed = 0;
  for (const auto& e : entries) {
    if (!e.passed()) {
      ++failed;
      progress("failed: " + e.name + fmt(" rel err %.3g", e.max_rel_error));
    }
    if (e.precision == "double") worst_op = std::max(worst_op, e.max_rel_error);
    else full = std::max(full, e.max_rel_error);
  }
  return {failed == 0 && secs < 120,
          fmt("%zu checks, %zu failed, worst op rel err %.2e (< 1e-5), end-to-end float %.2e (< 1e-2), %.1f s (< 120)",
              entries.size(), failed, worst_op, full, secs)};
}

// 2. Rank-pooling oracle against hand values and its algebraic properties.
Outcome oracle_exactness(const fs::path&) {
  bool ok = true;
  const auto a2 = oracle::rank_pool_coefficients(2);
  const auto a3 = oracle::rank_pool_coefficients(3);
  ok &= near(a2[0], -0.5, 1e-9) && near(a2[1], 0.5, 1e-9);
  ok &= near(a3[0], -4.0 / 3, 1e-9) && near(a3[1], 2.0 / 3, 1e-9) && near(a3[2], 2.0 / 3, 1e-9);
  const bool hand = ok;

  double worst_sum = 0;
  for (std::size_t T = 2; T <= 64; ++T) {
    const auto a = oracle::rank_pool_coefficients(T);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(a.begin(), a.end(), 0.0)));
  }
  ok &= worst_sum < 1e-9;

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  double worst_shift = 0;
  bool pgm_equal = true;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<data::Image> frames(8, data::Image(3, 16, 16));
    for (auto& f : frames)
      for (auto& v : f.pixels) v = u(rng);
    auto shifted = frames;
    const double c = u(rng);
    for (auto& f : shifted)
      for (auto& v : f.pixels) v += c;
    const auto d0 = oracle::dynamic_image(frames);
    const auto d1 = oracle::dynamic_image(shifted);
    for (std::size_t i = 0; i < d0.pixels.size(); ++i) {
      worst_shift = std::max(worst_shift, std::abs(d0.pixels[i] - d1.pixels[i]));
    }
    pgm_equal &= data::encode_pnm(d0) == data::encode_pnm(d1);
  }
  ok &= worst_shift <= 1e-12 && pgm_equal;

  const std::vector<data::Image> constant(5, data::Image(3, 8, 8, 0.37));
  const auto dc = oracle::dynamic_image(constant);
  const bool uniform = std::all_of(dc.pixels.begin(), dc.pixels.end(), [](double v) { return v == 0.5; });
  ok &= uniform;

  return {ok, fmt("hand T=2,3 %s; max |sum alpha| T=2..64 %.1e; offset shift max |delta| %.1e, PGM %s; constant clip %s",
                  hand ? "match" : "MISMATCH", worst_sum, worst_shift, pgm_equal ? "identical" : "DIFFERENT",
                  uniform ? "uniform 0.5" : "NOT uniform")};
}

// Independent restatement of the recognition metrics straight from the matrix.
struct HandMetrics {
  double uar, war, f1;
};

HandMetrics hand_metrics(const std::vector<std::vector<std::size_t>>& m) {
  const std::size_t k = m.size();
  double trace = 0, n = 0, recall = 0, f1 = 0;
  for (std::size_t j = 0; j < k; ++j) {
    double row = 0, col = 0;
    for (std::size_t i = 0; i < k; ++i) {
      row += m[j][i];
      col += m[i][j];
    }
    const double tp = m[j][j];
    trace += tp;
    n += row;
    recall += tp / row;
    if (tp > 0) {
      const double p = tp / col, r = tp / row;
      f1 += 2 * p * r / (p + r);
    }
  }
  return {recall / k, trace / n, f1 / k};
}

// 3. Recognition metrics on the worked example, degenerate cases and random matrices.
Outcome metric_exactness(const fs::path&) {
  const std::vector<std::size_t> labels{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  const std::vector<std::size_t> preds{0, 0, 0, 1, 0, 0, 1, 1, 1, 1};
  const auto c = eval::confusion(preds, labels, 2);
  bool ok = c.rows() == std::vector<std::vector<std::size_t>>{{3, 1}, {2, 4}};
  const double w = eval::war(c), u = eval::uar(c), f = eval::macro_f1(c);
  ok &= near(w, 0.7, 1e-12) && near(u, 0.75 / 2 + 4.0 / 12, 1e-12) && near(f, 0.6970, 1e-4);

  bool degenerate = true;
  const auto perfect = eval::confusion(labels, labels, 2);
  degenerate &= eval::war(perfect) == 1.0 && eval::uar(perfect) == 1.0 && eval::macro_f1(perfect) == 1.0;
  std::vector<std::size_t> wrong(labels.size());
  std::transform(labels.begin(), labels.end(), wrong.begin(), [](std::size_t l) { return 1 - l; });
  degenerate &= eval::war(eval::confusion(wrong, labels, 2)) == 0.0;
  const auto empty = eval::confusion({}, {}, 3);
  degenerate &= empty.total() == 0;
  try {
    eval::war(empty);
    degenerate = false;
  } catch (const DataError&) {
  } catch (const UsageError&) {
  }
  try {
    eval::uar(eval::confusion(std::vector<std::size_t>{0, 0}, std::vector<std::size_t>{0, 0}, 2));
    degenerate = false;
  } catch (const DataError& e) {
    degenerate &= std::string(e.what()).find("class 1") != std::string::npos;
  }
  const auto never = eval::confusion(std::vector<std::size_t>{0, 0, 0}, std::vector<std::size_t>{0, 1, 1}, 2);
  degenerate &= eval::class_f1(never)[1] == 0.0;
  try {
    eval::confusion(std::vector<std::size_t>{2}, std::vector<std::size_t>{0}, 2);
    degenerate = false;
  } catch (const DataError&) {
  }
  ok &= degenerate;

  std::mt19937_64 rng(11);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng() % 5;
    eval::ConfusionCounts cc(k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) cc.at(i, j) = rng() % 10 + (i == j ? 1 : 0);
    const auto h = hand_metrics(cc.rows());
    worst = std::max({worst, std::abs(h.uar - eval::uar(cc)), std::abs(h.war - eval::war(cc)),
                      std::abs(h.f1 - eval::macro_f1(cc))});
  }
  ok &= worst < 1e-12;
  return {ok, fmt("[[3,1],[2,4]]: WAR %.4f UAR %.6f macro-F1 %.4f; degenerate cases %s; 100 random matrices max diff %.1e",
                  w, u, f, degenerate ? "ok" : "WRONG", worst)};
}

// 4. Rank-sum test: exact enumeration, normal approximation, symmetry.
Outcome ranksum_correctness(const fs::path&) {
  const std::vector<double> a{1, 2}, b{3, 4};
  const auto r = eval::wilcoxon_rank_sum(a, b, eval::Sidedness::kLess);
  bool ok = r.p_exact && near(*r.p_exact, 1.0 / 6, 1e-12);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(6), y(6);
    const double shift = 0.25 * (trial % 8);
    for (auto& v : x) v = nd(rng);
    for (auto& v : y) v = nd(rng) + shift;
    for (auto side : {eval::Sidedness::kTwoSided, eval::Sidedness::kLess, eval::Sidedness::kGreater}) {
      const auto t = eval::wilcoxon_rank_sum(x, y, side);
      if (!t.p_exact) return {false, "no exact p for n_a = n_b = 6"};
      worst = std::max(worst, std::abs(t.p - *t.p_exact));
    }
  }
  ok &= worst < 0.03;

  const std::vector<double> same{0.4, 0.9, 1.3, 2.2};
  const auto s = eval::wilcoxon_rank_sum(same, same);
  ok &= s.z == 0.0 && near(s.p, 1.0, 1e-12);
  return {ok, fmt("a=[1,2] b=[3,4] one-sided exact p %.6f; n=6 normal vs exact max gap %.4f (< 0.03) over 600 tests; "
                  "identical samples z %.1f p %.3f",
                  r.p_exact.value_or(-1), worst, s.z, s.p)};
}

// 5. Tiny model overfits twelve synthetic clips.
Outcome overfit_check(const fs::path&) {
  const auto cfg = overfit_config();
  const auto clips = data::synth_clips(overfit_spec());
  Stopwatch sw;
  app::Trainer trainer(cfg, 3);
  const auto log = trainer.fit(clips, [](const app::EpochStats& s) {
    if (s.epoch % 50 == 0) progress(app::format_epoch(s));
    return true;
  });
  const double secs = sw.seconds();
  const auto results = app::evaluate(trainer.model(), cfg, clips);
  const auto summary = app::summarize(results, 3, cfg.f1_average);
  const double first = log.front().rank, last = log.back().rank;
  const bool ok = log.size() <= 200 && summary.accuracy == 1.0 && last < 0.1 * first &&
                  summary.monotone_fraction >= 0.9 && secs < 300;
  return {ok, fmt("12 clips, %zu epochs in %.0f s (< 300): train acc %.4f (= 1), L_Rank %.4f -> %.4f (%.1f%% of initial, < 10%%), "
                  "monotone clips %.0f%% (>= 90%%)",
                  log.size(), secs, summary.accuracy, first, last, 100 * last / first, 100 * summary.monotone_fraction)};
}

// 6. LOSO on the default synthetic set plus the zero-amplitude negative control.
Outcome synthetic_loso(const fs::path& work) {
  const auto cfg = synthetic_config(60);
  auto run = [&](const data::SynthSpec& spec, const std::string& name) {
    const auto d = generate(spec, work / name);
    return app::aggregate(app::run_folds(cfg, d.clips, d.manifest.classes, eval::loso_split(d.manifest), "loso",
                                         [](const std::string& line) {
                                           if (line.find(" epoch 60 ") != std::string::npos) progress(line);
                                         }));
  };
  Stopwatch sw;
  const auto main = run(data::SynthSpec{}, "synth_default");
  const double secs = sw.seconds();
  data::SynthSpec still;
  still.amplitude = 0;
  const auto control = run(still, "synth_still");
  const double chance = 1.0 / 3;
  const bool ok = main.accuracy >= 0.8 && main.uar.value_or(0) >= 0.75 && secs < 1200 &&
                  std::abs(control.accuracy - chance) <= 0.15;
  return {ok, fmt("72 clips, 6 folds in %.0f s (< 1200): pooled acc %.4f (>= 0.8), UAR %.4f (>= 0.75); "
                  "amplitude 0 control acc %.4f (1/3 +- 0.15)",
                  secs, main.accuracy, main.uar.value_or(-1), control.accuracy)};
}

// 7. Joint learning lowers dynamic-image error versus a constant map and the L_MER ablation.
Outcome joint_learning(const fs::path& work) {
  const auto d = generate(data::SynthSpec{}, work / "synth_joint");
  const auto plan = eval::holdout_split(d.manifest, {eval::subjects_of(d.manifest).back()});
  double full = 0, ablation = 0, baseline = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto cfg = synthetic_config(40);
    cfg.seed = seed;
    auto abl = cfg;
    abl.lambda_mer = 0;
    const auto f = app::aggregate(app::run_folds(cfg, d.clips, d.manifest.classes, plan, "holdout"));
    const auto a = app::aggregate(app::run_folds(abl, d.clips, d.manifest.classes, plan, "holdout"));
    progress(fmt("seed %llu: full %.5f, without L_MER %.5f, constant %.5f", static_cast<unsigned long long>(seed),
                 f.average_mse, a.average_mse, f.baseline_mse));
    full += f.average_mse / 3;
    ablation += a.average_mse / 3;
    baseline += f.baseline_mse / 3;
  }
  const bool ok = full < baseline && full < ablation;
  return {ok, fmt("Average MSE over 3 seeds on held-out clips: full %.5f < constant 0.5 map %.5f and < without L_MER %.5f",
                  full, baseline, ablation)};
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 8. Identical logs for identical seeds, stable checkpoints, exact image round-trips.
Outcome reproducibility(const fs::path& work) {
  fs::create_directories(work);
  auto cfg = synthetic_config(3);
  const auto clips = data::synth_clips(overfit_spec());
  auto train = [&](app::Trainer& t) {
    std::string log;
    t.fit(clips, [&](const app::EpochStats& s) {
      log += app::format_epoch(s) + "\n";
      return true;
    });
    return log;
  };
  app::Trainer t1(cfg, 3), t2(cfg, 3);
  const auto log1 = train(t1), log2 = train(t2);
  const bool logs = log1 == log2 && !log1.empty();

  const std::vector<std::string> classes{"class0", "class1", "class2"};
  app::save_checkpoint(work / "a.ckpt", cfg, classes, t1.model());
  const auto ck = app::load_checkpoint(work / "a.ckpt");
  app::save_checkpoint(work / "b.ckpt", ck.config, ck.classes, *ck.model);
  const bool ckpt = slurp(work / "a.ckpt") == slurp(work / "b.ckpt");

  const auto& frame = clips.front().frames.front();
  data::write_image(work / "a.ppm", frame);
  data::write_image(work / "b.ppm", data::read_image(work / "a.ppm"));
  const auto gray = oracle::dynamic_image(clips.front().frames);
  data::write_image(work / "a.pgm", gray);
  data::write_image(work / "b.pgm", data::read_image(work / "a.pgm"));
  const bool images = slurp(work / "a.ppm") == slurp(work / "b.ppm") && slurp(work / "a.pgm") == slurp(work / "b.pgm") &&
                      data::read_image(work / "a.ppm") == frame;

  return {logs && ckpt && images,
          fmt("training logs %s (%zu bytes); checkpoint save-load-save %s; PPM/PGM write-read-write %s",
              logs ? "identical" : "DIFFER", log1.size(), ckpt ? "identical" : "DIFFERS",
              images ? "identical" : "DIFFERS")};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const fs::path&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"fdp acceptance suite"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "fdp_acceptance").string();
  cli.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 8));
  cli.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(cli, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "oracle exactness", oracle_exactness},
      {3, "metric exactness", metric_exactness},
      {4, "rank-sum correctness", ranksum_correctness},
      {5, "overfit check", overfit_check},
      {6, "synthetic LOSO", synthetic_loso},
      {7, "joint learning", joint_learning},
      {8, "reproducibility", reproducibility},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::fprintf(stderr, "[%d] %s\n", c.id, c.name);
    Outcome o;
    try {
      o = c.run(fs::path(work) / ("c" + std::to_string(c.id)));
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
