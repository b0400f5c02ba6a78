#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fdp/data/manifest.hpp"

namespace fdp::eval {

// Row indices refer to the manifest the plan was built from.
struct Fold {
  std::string held_out;  // subject id, or a short tag for non-LOSO plans
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

using FoldPlan = std::vector<Fold>;

// One fold per distinct subject, ordered by subject id. Within a fold rows keep
// manifest order.
FoldPlan loso_split(const data::Manifest& manifest);

// A single fold testing on the listed subjects and training on the rest.
FoldPlan holdout_split(const data::Manifest& manifest, const std::vector<std::string>& test_subjects);

std::vector<std::string> subjects_of(const data::Manifest& manifest);

}  // namespace fdp::eval
