#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fdp/app/config.hpp"
#include "fdp/model/fdp_model.hpp"

namespace fdp::app {

// Binary layout, all integers little-endian:
//   "FDP1" | u32 version | u64 len + config text | u32 class count
//   | per class: u32 len + name | u32 tensor count
//   | per tensor: u32 len + name, u8 dtype (1 = f32, 2 = f64), u32 rank,
//     u64 dims[rank], payload
//   | u64 FNV-1a of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::vector<std::string> classes;
  std::unique_ptr<model::FdpModel<float>> model;
};

std::vector<std::uint8_t> encode_checkpoint(const RunConfig& cfg, const std::vector<std::string>& classes,
                                            const model::FdpModel<float>& model);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const std::vector<std::string>& classes,
                     const model::FdpModel<float>& model);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n);

}  // namespace fdp::app
