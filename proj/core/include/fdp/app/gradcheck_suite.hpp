#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fdp/model/fdp_model.hpp"

namespace fdp::app {

struct GradCheckEntry {
  std::string name;
  std::string precision;  // "double" or "single"
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed() const noexcept { return max_rel_error < tolerance; }
};

inline constexpr double kOpTolerance = 1e-5;
inline constexpr double kModelTolerance = 1e-2;

std::vector<std::string> op_check_names();

// One differentiable op at one random point, double precision.
GradCheckEntry check_op(std::size_t index, std::uint64_t seed);

// Worst error of every op over `points` random points.
std::vector<GradCheckEntry> check_all_ops(std::size_t points);

// A small model with every block type, dropout off.
model::ModelConfig gradcheck_model_config();

// Full composed loss in single precision against a double twin.
GradCheckEntry check_full_loss(const model::ModelConfig& cfg, std::uint64_t seed);

std::vector<GradCheckEntry> run_gradcheck_suite(std::size_t points = 5);

}  // namespace fdp::app
