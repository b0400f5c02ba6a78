#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "fdp/data/image.hpp"

namespace fdp::data {

// Uniformly spaced frame indices: stride s = max(1, floor(L/t)), index k is
// offset + k*s clamped to L-1.
std::size_t sample_stride(std::size_t length, std::size_t t);
std::size_t max_offset(std::size_t length, std::size_t t);
std::vector<std::size_t> sample_clip(std::size_t length, std::size_t t, std::size_t offset = 0);
std::size_t draw_offset(std::size_t length, std::size_t t, std::mt19937_64& rng);

// Source frames are square source_extent pixels. They are box-downsampled by
// an integer factor and then cropped to crop x crop. Training windows flip
// horizontally with probability 0.5 when flip is set.
struct PreprocessConfig {
  std::size_t source_extent = 72;
  std::size_t downsample = 1;
  std::size_t crop = 64;
  bool flip = true;

  void validate() const;
  std::size_t scaled_extent() const noexcept { return source_extent / downsample; }
  std::size_t margin() const noexcept { return scaled_extent() - crop; }
};

// Crop origin in downsampled coordinates and the horizontal flip flag. One
// window is drawn per clip and applied to all of its frames.
struct CropWindow {
  std::size_t y = 0;
  std::size_t x = 0;
  bool flip = false;
  bool operator==(const CropWindow&) const = default;
};

CropWindow draw_train_window(const PreprocessConfig& cfg, std::mt19937_64& rng);
CropWindow eval_window(const PreprocessConfig& cfg);

Image downsample(const Image& img, std::size_t factor);
Image flip_horizontal(const Image& img);
Image apply_window(const Image& frame, const PreprocessConfig& cfg, const CropWindow& w);
std::vector<Image> apply_window(std::span<const Image> frames, const PreprocessConfig& cfg, const CropWindow& w);

// Single-frame forms with the default 72 -> 64 configuration.
Image preprocess_train(const Image& frame, std::mt19937_64& rng);
Image preprocess_eval(const Image& frame);

}  // namespace fdp::data
