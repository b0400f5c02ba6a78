#include "fdp/data/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace fdp::data {
namespace {

using Kind = ImageFormatError::Kind;

class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, const std::string& origin) : b_(bytes), origin_(origin) {}

  std::string magic() {
    if (b_.size() < 2 || b_[0] != 'P') fail(Kind::kMalformedHeader, "missing portable-map magic");
    pos_ = 2;
    return std::string{static_cast<char>(b_[0]), static_cast<char>(b_[1])};
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) {
      fail(Kind::kMalformedHeader, std::string("expected ") + field);
    }
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (v > (std::size_t{1} << 30)) fail(Kind::kMalformedHeader, std::string(field) + " out of range");
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the payload.
  std::size_t payload_start() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) fail(Kind::kMalformedHeader, "missing separator after maxval");
    return pos_ + 1;
  }

  [[noreturn]] void fail(Kind kind, const std::string& msg) const {
    throw ImageFormatError(kind, origin_ + ": " + msg);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& b_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * c));
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw UsageError("encode_pnm: only 1 or 3 channels are supported, got " + std::to_string(img.channels));
  }
  if (img.height == 0 || img.width == 0 || img.pixels.size() != img.channels * img.plane()) {
    throw UsageError("encode_pnm: inconsistent image extents");
  }
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + img.pixels.size());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.push_back(quantize(img.at(c, y, x)));
  return out;
}

Image decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  HeaderReader r(bytes, origin);
  const std::string magic = r.magic();
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else if (magic.size() == 2 && magic[1] >= '1' && magic[1] <= '7') {
    r.fail(Kind::kUnsupportedFormat, "unsupported portable-map variant " + magic + " (binary P5/P6 only)");
  } else {
    r.fail(Kind::kMalformedHeader, "unknown magic " + magic);
  }
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (width == 0 || height == 0) r.fail(Kind::kMalformedHeader, "zero image extent");
  if (maxval != 255) r.fail(Kind::kUnsupportedFormat, "maxval " + std::to_string(maxval) + " (only 255 supported)");
  const std::size_t start = r.payload_start();
  const std::size_t need = channels * width * height;
  if (bytes.size() < start + need) {
    r.fail(Kind::kTruncatedPayload,
           "payload has " + std::to_string(bytes.size() - std::min(bytes.size(), start)) + " of " +
               std::to_string(need) + " bytes");
  }
  Image img(channels, height, width);
  const std::uint8_t* p = bytes.data() + start;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c) img.at(c, y, x) = *p++ / 255.0;
  return img;
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes, path.string());
}

void write_image(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image g(1, img.height, img.width);
  const std::size_t n = img.plane();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < img.channels; ++c) s += img.pixels[c * n + i];
    g.pixels[i] = s / static_cast<double>(img.channels);
  }
  return g;
}

}  // namespace fdp::data
