#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fdp/app/adam.hpp"
#include "fdp/app/checkpoint.hpp"
#include "fdp/app/config.hpp"
#include "fdp/app/experiment.hpp"
#include "fdp/app/trainer.hpp"
#include "fdp/data/synth.hpp"
#include "fdp/eval/protocols.hpp"
#include "fdp/numerics/graph.hpp"
#include "json.hpp"

namespace {

using namespace fdp;
using namespace fdp::app;

RunConfig micro_config() {
  return parse_config(R"(
frames = 3
source_extent = 20
crop = 16
stem_channels = 4
stage_channels = 8,16
patches = 2,2
num_local = 1
num_global = 1
heads = 2
dropout = 0.1
dyn_channels = 2
mer_hidden = 6
dic_channels = 4,4
dic_up_channels = 4,2
batch_size = 4
learning_rate = 1e-3
epochs = 2
)");
}

data::SynthSpec micro_spec() {
  data::SynthSpec s;
  s.num_subjects = 2;
  s.num_classes = 2;
  s.clips_per_cell = 2;
  s.frames_per_clip = 6;
  s.extent = 20;
  return s;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fdp_test_app_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

TEST(Config, DefaultsMatchTheReferenceSetting) {
  const RunConfig c;
  EXPECT_EQ(c.frames, 8u);
  EXPECT_DOUBLE_EQ(c.lambda_dic, 100.0);
  EXPECT_DOUBLE_EQ(c.lambda_rank, 0.1);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.batch_size, 36u);
  EXPECT_EQ(c.preprocess.crop, 64u);
  EXPECT_TRUE(c.preprocess.flip);
}

TEST(Config, ParsesCommentsAndLists) {
  const auto c = parse_config("# tiny\nframes = 4  # four\nstage_channels = 16, 64\npatches = 2,4\nflip = false\n");
  EXPECT_EQ(c.frames, 4u);
  EXPECT_EQ(c.encoder.stage_channels, (std::vector<std::size_t>{16, 64}));
  EXPECT_FALSE(c.preprocess.flip);
}

TEST(Config, TextRoundTripIsCanonical) {
  const auto c = micro_config();
  const auto text = to_text(c);
  const auto back = parse_config(text);
  EXPECT_EQ(to_text(back), text);
  EXPECT_EQ(config_hash(back), config_hash(c));
  for (const auto& key : config_keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
}

TEST(Config, HashChangesWithAnyValue) {
  auto a = micro_config();
  auto b = a;
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, RejectsUnknownRepeatedAndMalformed) {
  EXPECT_THROW(parse_config("framez = 4\n"), UsageError);
  EXPECT_THROW(parse_config("frames = 4\nframes = 5\n"), UsageError);
  EXPECT_THROW(parse_config("frames = four\n"), UsageError);
  EXPECT_THROW(parse_config("frames 4\n"), UsageError);
  EXPECT_THROW(parse_config("augment = maybe\n"), UsageError);
  EXPECT_THROW(parse_config("f1_average = micro\n"), UsageError);
}

TEST(Config, ValidateRejectsInconsistentModels) {
  auto c = micro_config();
  c.encoder.patches = {2};
  EXPECT_THROW(c.validate(), UsageError);
  c = micro_config();
  c.frames = 0;
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(Adam, FirstStepMovesEachCoordinateByTheLearningRate) {
  num::Parameter<double> p("w", num::Tensor<double>({3}, {1.0, -2.0, 0.5}));
  p.grad = num::Tensor<double>({3}, {0.3, -4.0, 1e-3});
  Adam<double> opt({&p}, AdamOptions{0.1});
  opt.step();
  EXPECT_NEAR(p.value[0], 0.9, 1e-6);
  EXPECT_NEAR(p.value[1], -1.9, 1e-6);
  EXPECT_NEAR(p.value[2], 0.4, 1e-4);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, MinimizesAQuadratic) {
  num::Parameter<double> p("w", num::Tensor<double>({1}, {5.0}));
  Adam<double> opt({&p}, AdamOptions{0.05});
  for (int i = 0; i < 2000; ++i) {
    p.grad = num::Tensor<double>({1}, {2.0 * (p.value[0] - 1.5)});
    opt.step();
  }
  EXPECT_NEAR(p.value[0], 1.5, 1e-2);
}

TEST(Trainer, PrepareClipEvalIsCentralAndDeterministic) {
  const auto cfg = micro_config();
  const auto clip = data::synth_clip(micro_spec(), 0, 1, 0);
  const auto a = prepare_clip(clip, cfg, nullptr);
  const auto b = prepare_clip(clip, cfg, nullptr);
  ASSERT_EQ(a.frames.size(), 3u);
  EXPECT_EQ(a.frames[0].height, 16u);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.frames[1], data::apply_window(clip.frames[2], cfg.preprocess, data::eval_window(cfg.preprocess)));
}

TEST(Trainer, FlipOffNeverFlips) {
  auto cfg = micro_config();
  cfg.preprocess.flip = false;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) EXPECT_FALSE(data::draw_train_window(cfg.preprocess, rng).flip);
}

TEST(Trainer, SameSeedGivesIdenticalLogs) {
  const auto cfg = micro_config();
  const auto clips = data::synth_clips(micro_spec());
  auto run = [&] {
    Trainer t(cfg, 2);
    std::string log;
    t.fit(clips, [&](const EpochStats& s) {
      log += format_epoch(s) + "\n";
      return true;
    });
    return log;
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  EXPECT_NE(a.find("epoch 2 loss"), std::string::npos);
}

TEST(Trainer, MerOnlyLossEqualsMerComponent) {
  auto cfg = micro_config();
  cfg.lambda_dic = 0;
  cfg.lambda_rank = 0;
  cfg.epochs = 1;
  Trainer t(cfg, 2);
  const auto stats = t.fit(data::synth_clips(micro_spec()));
  ASSERT_EQ(stats.size(), 1u);
  EXPECT_NEAR(stats[0].loss, stats[0].mer, 1e-6);
}

TEST(Trainer, EarlyStopHonorsCallback) {
  Trainer t(micro_config(), 2);
  const auto stats = t.fit(data::synth_clips(micro_spec()), [](const EpochStats&) { return false; });
  EXPECT_EQ(stats.size(), 1u);
}

TEST(Trainer, RejectsMismatchedClips) {
  const auto cfg = micro_config();
  auto clips = data::synth_clips(micro_spec());
  EXPECT_THROW(check_clips(clips, cfg, 1), DataError);
  clips[0].frames[0] = data::Image(3, 10, 10);
  EXPECT_THROW(check_clips(clips, cfg, 2), DataError);
}

TEST(Trainer, EvaluateReportsPerClipResults) {
  const auto cfg = micro_config();
  const auto clips = data::synth_clips(micro_spec());
  Trainer t(cfg, 2);
  const auto res = evaluate(t.model(), cfg, clips);
  ASSERT_EQ(res.size(), clips.size());
  for (const auto& r : res) {
    EXPECT_EQ(r.probs.size(), 2u);
    EXPECT_NEAR(r.probs[0] + r.probs[1], 1.0, 1e-5);
    EXPECT_EQ(r.scores.size(), 3u);
    EXPECT_GE(r.mse, 0.0);
    double rank = 0;
    for (std::size_t k = 0; k < r.scores.size(); ++k) rank += std::abs(cfg.rank_slope * k - r.scores[k]);
    EXPECT_NEAR(r.rank_loss, rank, 1e-9);
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = micro_config();
    trainer = std::make_unique<Trainer>(cfg, 2);
    trainer->train_epoch(data::synth_clips(micro_spec()));
  }
  RunConfig cfg;
  std::unique_ptr<Trainer> trainer;
  std::vector<std::string> classes{"class0", "class1"};
};

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  const auto bytes = encode_checkpoint(cfg, classes, trainer->model());
  const auto ck = decode_checkpoint(bytes);
  EXPECT_EQ(ck.classes, classes);
  EXPECT_EQ(to_text(ck.config), to_text(cfg));
  EXPECT_EQ(encode_checkpoint(ck.config, ck.classes, *ck.model), bytes);
}

TEST_F(CheckpointTest, LoadedModelPredictsIdentically) {
  const auto dir = temp_dir("ck");
  save_checkpoint(dir / "m.ckpt", cfg, classes, trainer->model());
  const auto ck = load_checkpoint(dir / "m.ckpt");
  const auto clips = data::synth_clips(micro_spec());
  const auto a = evaluate(trainer->model(), cfg, clips);
  const auto b = evaluate(*ck.model, ck.config, clips);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].probs, b[i].probs);
    EXPECT_EQ(a[i].scores, b[i].scores);
  }
}

TEST_F(CheckpointTest, DetectsCorruptionAndTruncation) {
  auto bytes = encode_checkpoint(cfg, classes, trainer->model());
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), DataError);
  auto cut = bytes;
  cut.resize(bytes.size() - 9);
  EXPECT_THROW(decode_checkpoint(cut), DataError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), DataError);
  EXPECT_THROW(load_checkpoint(temp_dir("none") / "missing.ckpt"), DataError);
}

TEST_F(CheckpointTest, ClassMismatchIsRejected) {
  const auto ck = decode_checkpoint(encode_checkpoint(cfg, classes, trainer->model()));
  const auto clips = data::synth_clips(micro_spec());
  EXPECT_THROW(evaluate_checkpoint(ck, clips, {"a", "b"}), DataError);
  const auto run = evaluate_checkpoint(ck, clips, classes);
  ASSERT_EQ(run.folds.size(), 1u);
  EXPECT_EQ(run.folds[0].results.size(), clips.size());
}

TEST(Experiment, SummarizeComputesRecognitionAndImageMetrics) {
  std::vector<ClipResult> r(4);
  const std::size_t labels[] = {0, 0, 1, 1}, preds[] = {0, 1, 1, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    r[i].label = labels[i];
    r[i].predicted = preds[i];
    r[i].mse = 0.1 * static_cast<double>(i + 1);
    r[i].baseline_mse = 0.5;
    r[i].rank_loss = 2;
    r[i].monotone = i != 0;
  }
  const auto s = summarize(r, 2, eval::F1Average::kMacro);
  EXPECT_EQ(s.samples, 4u);
  EXPECT_DOUBLE_EQ(s.accuracy, 0.75);
  ASSERT_TRUE(s.uar.has_value());
  EXPECT_DOUBLE_EQ(*s.uar, 0.75);
  EXPECT_NEAR(s.average_mse, 0.25, 1e-12);
  EXPECT_DOUBLE_EQ(s.baseline_mse, 0.5);
  EXPECT_DOUBLE_EQ(s.monotone_fraction, 0.75);
  EXPECT_EQ(s.confusion.at(0, 1), 1u);
}

TEST(Experiment, SummarizeLeavesUarUndefinedForAbsentClass) {
  std::vector<ClipResult> r(2);
  r[0].label = r[1].label = 0;
  const auto s = summarize(r, 2, eval::F1Average::kMacro);
  EXPECT_FALSE(s.uar.has_value());
  EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
}

TEST(Experiment, DeterministicRunsUseOneWorker) { EXPECT_EQ(worker_count(true), 1u); }

TEST(Experiment, LosoRunAndReport) {
  auto cfg = micro_config();
  cfg.epochs = 1;
  const auto spec = micro_spec();
  const auto dir = temp_dir("loso");
  data::synth_generate(spec, dir);
  const auto manifest = data::read_manifest(dir / "manifest.csv");
  const auto clips = data::load_clips(dir / "manifest.csv", manifest);
  const auto plan = eval::loso_split(manifest);
  std::vector<std::string> lines;
  const auto run = run_folds(cfg, clips, manifest.classes, plan, "loso", [&](const std::string& l) { lines.push_back(l); });
  ASSERT_EQ(run.folds.size(), 2u);
  EXPECT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].rfind("fold s01 epoch 1 ", 0), 0u);
  const auto s = aggregate(run);
  EXPECT_EQ(s.samples, clips.size());

  const auto doc = nlohmann::json::parse(report_json(run));
  EXPECT_EQ(doc["protocol"], "loso");
  EXPECT_EQ(doc["config_hash"], config_hash(cfg));
  EXPECT_EQ(doc["folds"].size(), 2u);
  EXPECT_EQ(doc["folds"][0]["held_out"], "s01");
  EXPECT_EQ(doc["summary"]["samples"], clips.size());
  EXPECT_TRUE(doc["summary"].contains("average_mse"));
  EXPECT_TRUE(doc["summary"].contains("confusion"));
}

TEST(Experiment, HoldoutWithEmptyTestSetIsAnError) {
  data::Manifest m;
  m.classes = {"a", "b"};
  m.rows = {{"c1", "s1", 0, "d", 4}, {"c2", "s2", 1, "d", 4}};
  EXPECT_THROW(eval::holdout_split(m, {"nobody"}), DataError);
  EXPECT_THROW(eval::holdout_split(m, {}), DataError);
}

}  // namespace

namespace {

TEST(Config, ShippedConfigsParse) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(FDP_CONFIG_DIR)) {
    if (e.path().extension() != ".cfg") continue;
    EXPECT_NO_THROW(fdp::app::read_config(e.path().string())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 2u);
}

}  // namespace
