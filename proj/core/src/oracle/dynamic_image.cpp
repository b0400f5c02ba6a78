#include "fdp/oracle/dynamic_image.hpp"

#include <algorithm>

namespace fdp::oracle {

double harmonic(std::size_t n) {
  double h = 0;
  for (std::size_t i = 1; i <= n; ++i) h += 1.0 / static_cast<double>(i);
  return h;
}

std::vector<double> rank_pool_coefficients(std::size_t T) {
  if (T < 2) throw UsageError("rank_pool_coefficients: need T >= 2, got " + std::to_string(T));
  const double ht = harmonic(T);
  std::vector<double> alpha(T);
  double h_prev = 0;  // H_{t-1}
  for (std::size_t t = 1; t <= T; ++t) {
    alpha[t - 1] = 2.0 * static_cast<double>(T - t + 1) - static_cast<double>(T + 1) * (ht - h_prev);
    h_prev += 1.0 / static_cast<double>(t);
  }
  return alpha;
}

Image rank_pool(std::span<const Image> frames) {
  if (frames.size() < 2) throw UsageError("dynamic_image: need at least 2 frames, got " + std::to_string(frames.size()));
  const auto alpha = rank_pool_coefficients(frames.size());
  const Image& first = frames.front();
  Image rho(1, first.height, first.width);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (!frames[t].same_extent(first)) {
      throw DataError("dynamic_image: frame " + std::to_string(t) + " extent differs from frame 0");
    }
    const Image gray = data::to_gray(frames[t]);
    for (std::size_t i = 0; i < rho.pixels.size(); ++i) rho.pixels[i] += alpha[t] * gray.pixels[i];
  }
  return rho;
}

Image normalize(const Image& rho) {
  Image out = rho;
  const auto [lo, hi] = std::minmax_element(rho.pixels.begin(), rho.pixels.end());
  if (lo == rho.pixels.end() || *hi <= *lo) {
    std::fill(out.pixels.begin(), out.pixels.end(), 0.5);
    return out;
  }
  const double mn = *lo, range = *hi - *lo;
  for (auto& v : out.pixels) v = std::clamp((v - mn) / range, 0.0, 1.0);
  return out;
}

Image dynamic_image(std::span<const Image> frames) { return normalize(rank_pool(frames)); }

double image_mse(const Image& predicted, const Image& target) {
  if (!predicted.same_extent(target) || predicted.pixels.empty()) {
    throw DataError("image_mse: extents differ or are empty");
  }
  double s = 0;
  for (std::size_t i = 0; i < target.pixels.size(); ++i) {
    const double d = predicted.pixels[i] - target.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(target.pixels.size());
}

double average_mse(std::span<const Image> predicted, std::span<const Image> targets) {
  if (predicted.empty()) throw UsageError("average_mse: empty set");
  if (predicted.size() != targets.size()) throw UsageError("average_mse: pair counts differ");
  double s = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += image_mse(predicted[i], targets[i]);
  return s / static_cast<double>(predicted.size());
}

}  // namespace fdp::oracle
