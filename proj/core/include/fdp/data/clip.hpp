#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fdp/data/image.hpp"

namespace fdp::data {

// A full, unsampled frame sequence with its subject and class.
struct VideoClip {
  std::string clip_id;
  std::string subject_id;
  std::size_t label = 0;
  std::vector<Image> frames;
};

}  // namespace fdp::data
