#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fdp/data/image.hpp"

// Approximate rank pooling in plain double arithmetic, independent of the
// autodiff engine so it can serve as the ground truth for the network.
namespace fdp::oracle {

using data::Image;

// H_n = sum_{i=1..n} 1/i, H_0 = 0.
double harmonic(std::size_t n);

// alpha_t = 2(T - t + 1) - (T + 1)(H_T - H_{t-1}) for t = 1..T (index t-1).
std::vector<double> rank_pool_coefficients(std::size_t T);

// rho = sum_t alpha_t * gray(frame_t), before normalization.
Image rank_pool(std::span<const Image> frames);

// Min-max normalization to [0, 1]; a constant map becomes uniform 0.5.
Image normalize(const Image& rho);

// normalize(rank_pool(frames)); color frames are reduced to their channel mean.
Image dynamic_image(std::span<const Image> frames);

double image_mse(const Image& predicted, const Image& target);

// Mean over pairs of the per-pair pixel MSE.
double average_mse(std::span<const Image> predicted, std::span<const Image> targets);

}  // namespace fdp::oracle
