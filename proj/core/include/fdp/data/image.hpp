#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fdp/error.hpp"

namespace fdp::data {

// Planar C x H x W pixel map with values in [0, 1]; C is 1 (gray) or 3 (RGB).
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  std::size_t plane() const noexcept { return height * width; }
  bool same_extent(const Image& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const Image&) const = default;
};

class ImageFormatError : public DataError {
 public:
  enum class Kind { kMalformedHeader, kTruncatedPayload, kUnsupportedFormat };
  ImageFormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Binary P5 (1 channel) / P6 (3 channels), maxval 255. Values are read as
// byte/255 and written as round(255*v) after clamping to [0, 1].
std::vector<std::uint8_t> encode_pnm(const Image& img);
Image decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img);

std::uint8_t quantize(double v);

// Channel mean; gray images are returned unchanged.
Image to_gray(const Image& img);

}  // namespace fdp::data
