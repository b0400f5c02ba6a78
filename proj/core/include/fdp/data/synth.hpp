#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "fdp/data/clip.hpp"
#include "fdp/data/manifest.hpp"

namespace fdp::data {

// Synthetic micro-motion clips: a per-subject static texture plus a Gaussian
// blob that drifts by `amplitude` pixels over the clip along the direction of
// angle 2*pi*j/m for class j. Pixel noise is added per frame.
struct SynthSpec {
  std::size_t num_subjects = 6;
  std::size_t num_classes = 3;
  std::size_t clips_per_cell = 4;
  std::size_t frames_per_clip = 24;
  double amplitude = 2.5;
  double noise = 0.02;
  std::uint64_t seed = 1;

  std::size_t extent = 72;
  double blob_sigma = 4.0;
  double blob_contrast = 0.5;
  // Blob contrast grows linearly from ramp_start * contrast on the first
  // frame to contrast on the last one.
  double ramp_start = 0.5;
  // Per-clip uniform jitter of the blob's starting point, in pixels.
  double start_jitter = 1.5;

  void validate() const;
  std::size_t num_clips() const noexcept { return num_subjects * num_classes * clips_per_cell; }
};

std::string synth_subject_id(std::size_t subject);
std::string synth_clip_id(std::size_t subject, std::size_t label, std::size_t index);

// Deterministic in (spec, subject, label, index) alone.
VideoClip synth_clip(const SynthSpec& spec, std::size_t subject, std::size_t label, std::size_t index);

// All clips, ordered by subject, then class, then index.
std::vector<VideoClip> synth_clips(const SynthSpec& spec);

// Writes dir/manifest.csv, its class table and dir/clips/<clip_id>/frame_NNNN.ppm.
// Returns the manifest path.
std::filesystem::path synth_generate(const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace fdp::data
