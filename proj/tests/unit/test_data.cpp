#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "fdp/data/manifest.hpp"
#include "fdp/data/sampling.hpp"
#include "fdp/data/synth.hpp"

using namespace fdp::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fdp_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image ramp_image(std::size_t c, std::size_t n) {
  Image img(c, n, n);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i % 256) / 255.0;
  return img;
}

ImageFormatError::Kind decode_error_kind(const std::string& data) {
  try {
    decode_pnm(bytes_of(data));
  } catch (const ImageFormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error for input";
  return ImageFormatError::Kind::kMalformedHeader;
}

}  // namespace

TEST(ImageIo, BlackGrayFileLayout) {
  const auto bytes = encode_pnm(Image(1, 2, 2));
  std::vector<std::uint8_t> expected = bytes_of("P5\n2 2\n255\n");
  expected.insert(expected.end(), 4, 0);
  EXPECT_EQ(bytes, expected);
}

TEST(ImageIo, ColorIsInterleavedOnDisk) {
  Image img(3, 1, 2);
  img.at(0, 0, 0) = 1.0;
  img.at(2, 0, 1) = 1.0;
  const auto bytes = encode_pnm(img);
  const std::vector<std::uint8_t> payload(bytes.end() - 6, bytes.end());
  EXPECT_EQ(payload, (std::vector<std::uint8_t>{255, 0, 0, 0, 0, 255}));
}

TEST(ImageIo, WriteReadWriteIsByteIdentical) {
  const auto dir = scratch_dir("roundtrip");
  for (std::size_t c : {1u, 3u}) {
    const auto a = dir / ("a" + std::to_string(c));
    const auto b = dir / ("b" + std::to_string(c));
    write_image(a, ramp_image(c, 7));
    write_image(b, read_image(a));
    EXPECT_EQ(read_bytes(a), read_bytes(b));
    EXPECT_EQ(read_image(a), ramp_image(c, 7));
  }
}

TEST(ImageIo, QuantizesByRounding) {
  EXPECT_EQ(quantize(0.5), 128);
  EXPECT_EQ(quantize(-1.0), 0);
  EXPECT_EQ(quantize(2.0), 255);
  EXPECT_EQ(quantize(100.4 / 255.0), 100);
}

TEST(ImageIo, HeaderCommentsAreSkipped) {
  auto data = bytes_of("P5\n# a comment\n1 1\n255\n");
  data.push_back(51);
  EXPECT_DOUBLE_EQ(decode_pnm(data).pixels[0], 0.2);
}

TEST(ImageIo, DistinctErrorKinds) {
  using K = ImageFormatError::Kind;
  EXPECT_EQ(decode_error_kind("XX\n1 1\n255\n0"), K::kMalformedHeader);
  EXPECT_EQ(decode_error_kind("P5\n1\n"), K::kMalformedHeader);
  EXPECT_EQ(decode_error_kind("P5\n2 2\n255\n\x01\x02"), K::kTruncatedPayload);
  EXPECT_EQ(decode_error_kind("P5\n1 1\n65535\n\x01\x02"), K::kUnsupportedFormat);
  EXPECT_EQ(decode_error_kind("P2\n1 1\n255\n0"), K::kUnsupportedFormat);
}

TEST(ImageIo, MissingFileIsDataError) {
  EXPECT_THROW(read_image("/nonexistent/frame.ppm"), fdp::DataError);
}

TEST(ImageIo, GrayIsChannelMean) {
  Image img(3, 1, 1);
  img.pixels = {0.3, 0.6, 0.9};
  EXPECT_NEAR(to_gray(img).pixels[0], 0.6, 1e-15);
}

TEST(Sampling, Examples) {
  EXPECT_EQ(sample_clip(16, 8, 0), (std::vector<std::size_t>{0, 2, 4, 6, 8, 10, 12, 14}));
  EXPECT_EQ(sample_clip(8, 8, 0), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(max_offset(8, 8), 0u);
  EXPECT_EQ(sample_stride(77, 8), 9u);
  EXPECT_EQ(max_offset(77, 8), 13u);
  EXPECT_EQ(sample_clip(77, 8, 0), (std::vector<std::size_t>{0, 9, 18, 27, 36, 45, 54, 63}));
}

TEST(Sampling, ShortClipRepeatsLastFrame) {
  EXPECT_EQ(sample_clip(3, 5, 0), (std::vector<std::size_t>{0, 1, 2, 2, 2}));
  EXPECT_EQ(max_offset(3, 5), 0u);
}

TEST(Sampling, IndicesStrictlyIncreasingAndInRange) {
  std::mt19937_64 rng(1);
  for (std::size_t L = 1; L <= 40; ++L)
    for (std::size_t t = 1; t <= L; ++t) {
      for (int trial = 0; trial < 3; ++trial) {
        const auto off = draw_offset(L, t, rng);
        ASSERT_LE(off, max_offset(L, t));
        const auto idx = sample_clip(L, t, off);
        for (std::size_t k = 0; k < t; ++k) {
          ASSERT_LT(idx[k], L);
          if (k) ASSERT_LT(idx[k - 1], idx[k]);
        }
        ASSERT_EQ(idx.back(), off + (t - 1) * sample_stride(L, t));
      }
    }
}

TEST(Sampling, ZeroArgumentsRejected) { EXPECT_THROW(sample_clip(0, 4), fdp::UsageError); }

TEST(Preprocess, TrainWindowsCoverMargin) {
  std::mt19937_64 rng(2);
  const PreprocessConfig cfg;
  std::size_t lo = 100, hi = 0, flips = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto w = draw_train_window(cfg, rng);
    lo = std::min({lo, w.y, w.x});
    hi = std::max({hi, w.y, w.x});
    flips += w.flip;
  }
  EXPECT_EQ(lo, 0u);
  EXPECT_EQ(hi, 8u);
  EXPECT_NEAR(flips / 2000.0, 0.5, 0.05);
}

TEST(Preprocess, CropWindows) {
  const Image src = ramp_image(3, 72);
  const PreprocessConfig cfg;
  const auto tl = apply_window(src, cfg, {0, 0, false});
  const auto br = apply_window(src, cfg, {8, 8, false});
  ASSERT_EQ(tl.height, 64u);
  ASSERT_EQ(tl.channels, 3u);
  EXPECT_EQ(tl.at(1, 0, 0), src.at(1, 0, 0));
  EXPECT_EQ(tl.at(2, 63, 63), src.at(2, 63, 63));
  EXPECT_EQ(br.at(0, 0, 0), src.at(0, 8, 8));
  EXPECT_EQ(br.at(0, 63, 63), src.at(0, 71, 71));
}

TEST(Preprocess, EvalIsCentralAndDeterministic) {
  const Image src = ramp_image(3, 72);
  const auto a = preprocess_eval(src);
  EXPECT_EQ(a, preprocess_eval(src));
  EXPECT_EQ(eval_window(PreprocessConfig{}), (CropWindow{4, 4, false}));
  EXPECT_EQ(a.at(0, 0, 0), src.at(0, 4, 4));
  EXPECT_EQ(a.at(0, 63, 63), src.at(0, 67, 67));
  EXPECT_EQ(a.at(1, 32, 32), src.at(1, 36, 36));
}

TEST(Preprocess, FlipTwiceIsIdentity) {
  const Image src = ramp_image(3, 9);
  EXPECT_EQ(flip_horizontal(flip_horizontal(src)), src);
  EXPECT_NE(flip_horizontal(src), src);
}

TEST(Preprocess, FlippedWindowMirrorsUnflipped) {
  const Image src = ramp_image(1, 72);
  const PreprocessConfig cfg;
  EXPECT_EQ(apply_window(src, cfg, {3, 5, true}), flip_horizontal(apply_window(src, cfg, {3, 5, false})));
}

TEST(Preprocess, TrainOutputExtent) {
  std::mt19937_64 rng(3);
  const auto out = preprocess_train(ramp_image(3, 72), rng);
  EXPECT_EQ(out.channels, 3u);
  EXPECT_EQ(out.height, 64u);
  EXPECT_EQ(out.width, 64u);
}

TEST(Preprocess, WrongExtentThrows) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(preprocess_eval(ramp_image(3, 64)), fdp::DataError);
  EXPECT_THROW(preprocess_train(ramp_image(3, 70), rng), fdp::DataError);
}

TEST(Preprocess, DownsampleThenCrop) {
  const PreprocessConfig cfg{72, 2, 32};
  EXPECT_EQ(eval_window(cfg), (CropWindow{2, 2, false}));
  Image src(1, 72, 72);
  src.at(0, 4, 4) = 1.0;
  src.at(0, 5, 5) = 1.0;
  const auto out = apply_window(src, cfg, eval_window(cfg));
  EXPECT_EQ(out.height, 32u);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 0.5);
  EXPECT_THROW((PreprocessConfig{72, 5, 8}).validate(), fdp::UsageError);
  EXPECT_THROW((PreprocessConfig{72, 2, 40}).validate(), fdp::UsageError);
}

TEST(Manifest, WriteParseRoundTrip) {
  const auto dir = scratch_dir("manifest");
  Manifest m;
  m.classes = {"neg", "pos", "sur"};
  m.rows = {{"a", "s1", 0, "clips/a", 3}, {"b", "s2", 2, "/abs/b", 12}};
  write_manifest(dir / "m.csv", m);
  EXPECT_TRUE(fs::exists(dir / "m.classes.txt"));
  EXPECT_EQ(read_manifest(dir / "m.csv"), m);
}

TEST(Manifest, RejectsBadInput) {
  const std::string hdr = std::string(kManifestHeader) + "\n";
  EXPECT_THROW(parse_manifest("clip,subject\n", "a\n"), fdp::DataError);
  EXPECT_THROW(parse_manifest(hdr + "a,s1,0,d,3\na,s2,0,d,3\n", "x\n"), fdp::DataError);
  EXPECT_THROW(parse_manifest(hdr + "a,s1,2,d,3\n", "x\ny\n"), fdp::DataError);
  EXPECT_THROW(parse_manifest(hdr + "a,s1,0,d\n", "x\n"), fdp::DataError);
  EXPECT_THROW(parse_manifest(hdr + "a,s1,zero,d,3\n", "x\n"), fdp::DataError);
  EXPECT_THROW(parse_manifest(hdr + "a,s1,0,d,0\n", "x\n"), fdp::DataError);
  EXPECT_THROW(read_manifest("/nonexistent/m.csv"), fdp::DataError);
}

TEST(Manifest, FrameFileNames) {
  EXPECT_EQ(frame_file_name(0), "frame_0000.ppm");
  EXPECT_EQ(frame_file_name(123), "frame_0123.ppm");
}

TEST(Synth, RowCountAndLayout) {
  SynthSpec spec;
  spec.num_subjects = 2;
  spec.clips_per_cell = 1;
  spec.frames_per_clip = 3;
  const auto dir = scratch_dir("synth_layout");
  const auto path = synth_generate(spec, dir);
  const auto m = read_manifest(path);
  EXPECT_EQ(m.rows.size(), spec.num_subjects * spec.num_classes * spec.clips_per_cell);
  EXPECT_EQ(m.num_classes(), 3u);
  EXPECT_NO_THROW(check_frames_on_disk(path, m));
  const auto clip = load_clip(path, m.rows[4]);
  EXPECT_EQ(clip.frames.size(), 3u);
  EXPECT_EQ(clip.frames[0].channels, 3u);
  EXPECT_EQ(clip.frames[0].height, 72u);
  EXPECT_EQ(clip.frames, synth_clip(spec, 1, 1, 0).frames);

  fs::remove(dir / m.rows[0].frame_dir / frame_file_name(2));
  EXPECT_THROW(check_frames_on_disk(path, m), fdp::DataError);
}

TEST(Synth, SameSeedIsByteIdentical) {
  SynthSpec spec;
  spec.num_subjects = 2;
  spec.clips_per_cell = 1;
  spec.frames_per_clip = 4;
  const auto a = synth_generate(spec, scratch_dir("synth_a"));
  const auto b = synth_generate(spec, scratch_dir("synth_b"));
  EXPECT_EQ(read_bytes(a), read_bytes(b));
  for (const auto& e : fs::recursive_directory_iterator(a.parent_path() / "clips")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.parent_path());
    ASSERT_EQ(read_bytes(e.path()), read_bytes(b.parent_path() / rel)) << rel;
  }
  spec.seed = 2;
  EXPECT_NE(synth_clip(spec, 0, 0, 0).frames[0], synth_clip(SynthSpec{}, 0, 0, 0).frames[0]);
}

TEST(Synth, ClassDirectionMovesBlob) {
  SynthSpec spec;
  spec.noise = 0;
  spec.start_jitter = 0;
  spec.ramp_start = 1;
  spec.amplitude = 10;
  spec.num_classes = 4;
  // Class 0 drifts toward +x: the right half brightens relative to the left.
  const auto clip = synth_clip(spec, 0, 0, 0);
  const auto& first = clip.frames.front();
  const auto& last = clip.frames.back();
  double left = 0, right = 0;
  for (std::size_t y = 0; y < 72; ++y)
    for (std::size_t x = 0; x < 72; ++x) {
      const double d = last.at(0, y, x) - first.at(0, y, x);
      (x < 36 ? left : right) += d;
    }
  EXPECT_GT(right, 0);
  EXPECT_LT(left, 0);
}

TEST(Synth, ZeroAmplitudeRemovesClassSignal) {
  SynthSpec spec;
  spec.amplitude = 0;
  spec.noise = 0;
  spec.start_jitter = 0;
  EXPECT_EQ(synth_clip(spec, 0, 0, 0).frames, synth_clip(spec, 0, 2, 0).frames);
}

TEST(Synth, InvalidSpecRejected) {
  SynthSpec spec;
  spec.num_classes = 0;
  EXPECT_THROW(spec.validate(), fdp::UsageError);
  spec = SynthSpec{};
  spec.amplitude = 40;
  EXPECT_THROW(spec.validate(), fdp::UsageError);
}
