#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fdp/data/clip.hpp"

namespace fdp::data {

struct ManifestRow {
  std::string clip_id;
  std::string subject_id;
  std::size_t label = 0;
  std::string frame_dir;  // relative to the manifest's directory unless absolute
  std::size_t num_frames = 0;

  bool operator==(const ManifestRow&) const = default;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> classes;

  std::size_t num_classes() const noexcept { return classes.size(); }
  // Unique ids, labels within the class table, at least one frame per clip.
  void validate() const;
  bool operator==(const Manifest&) const = default;
};

inline constexpr const char* kManifestHeader = "clip_id,subject_id,label,frame_dir,num_frames";

// "dir/name.csv" keeps its class table in "dir/name.classes.txt", one name per line.
std::filesystem::path class_table_path(const std::filesystem::path& manifest_path);

std::string frame_file_name(std::size_t index);

Manifest parse_manifest(const std::string& csv, const std::string& classes_text, const std::string& origin = "<memory>");
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

std::filesystem::path resolve_frame_dir(const std::filesystem::path& manifest_path, const ManifestRow& row);

// Checks that every row's frame directory holds exactly num_frames frame files.
void check_frames_on_disk(const std::filesystem::path& manifest_path, const Manifest& manifest);

VideoClip load_clip(const std::filesystem::path& manifest_path, const ManifestRow& row);
std::vector<VideoClip> load_clips(const std::filesystem::path& manifest_path, const Manifest& manifest);

}  // namespace fdp::data
