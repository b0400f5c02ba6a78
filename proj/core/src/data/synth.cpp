#include "fdp/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace fdp::data {
namespace {

constexpr std::uint64_t kTextureStream = 0x7e47;
constexpr std::uint64_t kClipStream = 0xc11b;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::size_t a, std::size_t b = 0, std::size_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(c)};
  return std::mt19937_64(seq);
}

// Smooth colored texture: a few low-frequency plane waves per channel around mid-gray.
Image subject_texture(const SynthSpec& spec, std::size_t subject) {
  auto rng = stream(spec.seed, kTextureStream, subject);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = spec.extent;
  Image tex(3, n, n);
  const double base = 0.35 + 0.3 * u(rng);
  for (std::size_t c = 0; c < 3; ++c) {
    const double tint = base + 0.1 * (u(rng) - 0.5);
    struct Wave { double fx, fy, phase, amp; };
    Wave waves[4];
    for (auto& w : waves) {
      const double freq = (1.0 + 3.0 * u(rng)) / static_cast<double>(n);
      const double dir = 2.0 * std::numbers::pi * u(rng);
      w = {freq * std::cos(dir), freq * std::sin(dir), 2.0 * std::numbers::pi * u(rng), 0.04 + 0.04 * u(rng)};
    }
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        double v = tint;
        for (const auto& w : waves) {
          v += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
        }
        tex.at(c, y, x) = v;
      }
  }
  return tex;
}

}  // namespace

void SynthSpec::validate() const {
  if (num_subjects == 0 || num_classes == 0 || clips_per_cell == 0 || frames_per_clip == 0 || extent == 0) {
    throw UsageError("synth: all counts must be >= 1");
  }
  if (amplitude < 0 || noise < 0 || blob_sigma <= 0 || start_jitter < 0) {
    throw UsageError("synth: amplitude, noise and jitter must be >= 0 and blob_sigma > 0");
  }
  if (amplitude + start_jitter > 0.25 * static_cast<double>(extent)) {
    throw UsageError("synth: blob travel must stay small relative to the frame extent");
  }
  if (ramp_start < 0 || ramp_start > 1) throw UsageError("synth: ramp_start must lie in [0, 1]");
}

std::string synth_subject_id(std::size_t subject) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%02zu", subject + 1);
  return buf;
}

std::string synth_clip_id(std::size_t subject, std::size_t label, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "s%02zu_c%zu_%02zu", subject + 1, label, index);
  return buf;
}

VideoClip synth_clip(const SynthSpec& spec, std::size_t subject, std::size_t label, std::size_t index) {
  spec.validate();
  if (subject >= spec.num_subjects || label >= spec.num_classes || index >= spec.clips_per_cell) {
    throw UsageError("synth_clip: index out of range");
  }
  const Image tex = subject_texture(spec, subject);
  auto rng = stream(spec.seed, kClipStream, subject, label, index);
  std::uniform_real_distribution<double> jitter(-spec.start_jitter, spec.start_jitter);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double center = 0.5 * static_cast<double>(spec.extent - 1);
  const double y0 = center + jitter(rng);
  const double x0 = center + jitter(rng);
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(spec.num_classes);
  const double inv2s2 = 1.0 / (2.0 * spec.blob_sigma * spec.blob_sigma);
  const std::size_t L = spec.frames_per_clip;

  VideoClip clip{synth_clip_id(subject, label, index), synth_subject_id(subject), label, {}};
  clip.frames.reserve(L);
  for (std::size_t k = 0; k < L; ++k) {
    const double progress = L > 1 ? static_cast<double>(k) / static_cast<double>(L - 1) : 0.0;
    const double cy = y0 + spec.amplitude * progress * std::sin(angle);
    const double cx = x0 + spec.amplitude * progress * std::cos(angle);
    const double contrast = spec.blob_contrast * (spec.ramp_start + (1.0 - spec.ramp_start) * progress);
    Image f = tex;
    for (std::size_t y = 0; y < spec.extent; ++y)
      for (std::size_t x = 0; x < spec.extent; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const double blob = contrast * std::exp(-(dy * dy + dx * dx) * inv2s2);
        for (std::size_t c = 0; c < 3; ++c) f.at(c, y, x) += blob;
      }
    if (spec.noise > 0) {
      for (auto& v : f.pixels) v += spec.noise * noise(rng);
    }
    // Stored at 8 bits so in-memory clips equal what the frame files hold.
    for (auto& v : f.pixels) v = quantize(v) / 255.0;
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

std::vector<VideoClip> synth_clips(const SynthSpec& spec) {
  std::vector<VideoClip> clips;
  clips.reserve(spec.num_clips());
  for (std::size_t s = 0; s < spec.num_subjects; ++s)
    for (std::size_t j = 0; j < spec.num_classes; ++j)
      for (std::size_t i = 0; i < spec.clips_per_cell; ++i) clips.push_back(synth_clip(spec, s, j, i));
  return clips;
}

std::filesystem::path synth_generate(const SynthSpec& spec, const std::filesystem::path& dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir / "clips", ec);
  if (ec) throw DataError("cannot create " + (dir / "clips").string() + ": " + ec.message());

  Manifest m;
  for (std::size_t j = 0; j < spec.num_classes; ++j) m.classes.push_back("class" + std::to_string(j));
  for (std::size_t s = 0; s < spec.num_subjects; ++s)
    for (std::size_t j = 0; j < spec.num_classes; ++j)
      for (std::size_t i = 0; i < spec.clips_per_cell; ++i) {
        const VideoClip clip = synth_clip(spec, s, j, i);
        const std::string rel = "clips/" + clip.clip_id;
        std::filesystem::create_directories(dir / rel, ec);
        if (ec) throw DataError("cannot create " + (dir / rel).string() + ": " + ec.message());
        for (std::size_t k = 0; k < clip.frames.size(); ++k) {
          write_image(dir / rel / frame_file_name(k), clip.frames[k]);
        }
        m.rows.push_back({clip.clip_id, clip.subject_id, clip.label, rel, clip.frames.size()});
      }
  const auto path = dir / "manifest.csv";
  write_manifest(path, m);
  return path;
}

}  // namespace fdp::data
