#include "fdp/data/sampling.hpp"

#include <algorithm>

namespace fdp::data {

std::size_t sample_stride(std::size_t length, std::size_t t) {
  if (length == 0 || t == 0) throw UsageError("sample_clip: length and t must be >= 1");
  return std::max<std::size_t>(1, length / t);
}

std::size_t max_offset(std::size_t length, std::size_t t) {
  const std::size_t s = sample_stride(length, t);
  const std::size_t span = (t - 1) * s;
  return span >= length - 1 ? 0 : length - 1 - span;
}

std::vector<std::size_t> sample_clip(std::size_t length, std::size_t t, std::size_t offset) {
  const std::size_t s = sample_stride(length, t);
  std::vector<std::size_t> idx(t);
  for (std::size_t k = 0; k < t; ++k) idx[k] = std::min(offset + k * s, length - 1);
  return idx;
}

std::size_t draw_offset(std::size_t length, std::size_t t, std::mt19937_64& rng) {
  const std::size_t hi = max_offset(length, t);
  if (hi == 0) return 0;
  return std::uniform_int_distribution<std::size_t>(0, hi)(rng);
}

void PreprocessConfig::validate() const {
  if (source_extent == 0 || downsample == 0 || crop == 0) throw UsageError("preprocess: extents must be positive");
  if (source_extent % downsample != 0) {
    throw UsageError("preprocess: downsample factor " + std::to_string(downsample) + " does not divide " +
                     std::to_string(source_extent));
  }
  if (crop > scaled_extent()) {
    throw UsageError("preprocess: crop " + std::to_string(crop) + " exceeds the downsampled extent " +
                     std::to_string(scaled_extent()));
  }
}

CropWindow draw_train_window(const PreprocessConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_int_distribution<std::size_t> origin(0, cfg.margin());
  CropWindow w;
  w.y = origin(rng);
  w.x = origin(rng);
  w.flip = cfg.flip && std::bernoulli_distribution(0.5)(rng);
  return w;
}

CropWindow eval_window(const PreprocessConfig& cfg) {
  cfg.validate();
  return {cfg.margin() / 2, cfg.margin() / 2, false};
}

Image downsample(const Image& img, std::size_t factor) {
  if (factor == 1) return img;
  if (factor == 0 || img.height % factor || img.width % factor) {
    throw ShapeError("downsample: factor " + std::to_string(factor) + " does not divide the image extent");
  }
  Image out(img.channels, img.height / factor, img.width / factor);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < out.height; ++y)
      for (std::size_t x = 0; x < out.width; ++x) {
        double s = 0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx) s += img.at(c, y * factor + dy, x * factor + dx);
        out.at(c, y, x) = s * inv;
      }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Image apply_window(const Image& frame, const PreprocessConfig& cfg, const CropWindow& w) {
  if (frame.height != cfg.source_extent || frame.width != cfg.source_extent) {
    throw DataError("preprocess: expected " + std::to_string(cfg.source_extent) + "x" +
                    std::to_string(cfg.source_extent) + " frame, got " + std::to_string(frame.height) + "x" +
                    std::to_string(frame.width));
  }
  if (w.y > cfg.margin() || w.x > cfg.margin()) throw UsageError("preprocess: crop window outside the frame");
  const Image src = downsample(frame, cfg.downsample);
  Image out(src.channels, cfg.crop, cfg.crop);
  for (std::size_t c = 0; c < src.channels; ++c)
    for (std::size_t y = 0; y < cfg.crop; ++y)
      for (std::size_t x = 0; x < cfg.crop; ++x) {
        const std::size_t sx = w.flip ? cfg.crop - 1 - x : x;
        out.at(c, y, x) = src.at(c, w.y + y, w.x + sx);
      }
  return out;
}

std::vector<Image> apply_window(std::span<const Image> frames, const PreprocessConfig& cfg, const CropWindow& w) {
  std::vector<Image> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(apply_window(f, cfg, w));
  return out;
}

Image preprocess_train(const Image& frame, std::mt19937_64& rng) {
  const PreprocessConfig cfg;
  return apply_window(frame, cfg, draw_train_window(cfg, rng));
}

Image preprocess_eval(const Image& frame) {
  const PreprocessConfig cfg;
  return apply_window(frame, cfg, eval_window(cfg));
}

}  // namespace fdp::data
