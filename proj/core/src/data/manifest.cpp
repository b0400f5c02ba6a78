#include "fdp/data/manifest.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace fdp::data {
namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::size_t parse_count(const std::string& s, const std::string& where) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size()) {
    throw DataError(where + ": expected a nonnegative integer, got '" + s + "'");
  }
  return v;
}

void check_field(const std::string& value, const char* name) {
  if (value.empty() || value.find_first_of(",\n\r") != std::string::npos) {
    throw UsageError(std::string("manifest ") + name + " '" + value + "' is empty or contains a separator");
  }
}

}  // namespace

void Manifest::validate() const {
  if (classes.empty()) throw DataError("manifest has an empty class table");
  std::set<std::string> ids;
  for (const auto& r : rows) {
    if (!ids.insert(r.clip_id).second) throw DataError("duplicate clip_id '" + r.clip_id + "'");
    if (r.label >= classes.size()) {
      throw DataError("clip '" + r.clip_id + "' has label " + std::to_string(r.label) + " but only " +
                      std::to_string(classes.size()) + " classes are defined");
    }
    if (r.num_frames == 0) throw DataError("clip '" + r.clip_id + "' has no frames");
  }
}

std::filesystem::path class_table_path(const std::filesystem::path& manifest_path) {
  auto p = manifest_path;
  p.replace_extension(".classes.txt");
  return p;
}

std::string frame_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.ppm", index);
  return buf;
}

Manifest parse_manifest(const std::string& csv, const std::string& classes_text, const std::string& origin) {
  Manifest m;
  for (auto& name : lines_of(classes_text)) {
    if (!name.empty()) m.classes.push_back(name);
  }
  const auto lines = lines_of(csv);
  if (lines.empty() || lines.front() != kManifestHeader) {
    throw DataError(origin + ": first line must be '" + std::string(kManifestHeader) + "'");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = origin + ":" + std::to_string(i + 1);
    const auto f = split_commas(lines[i]);
    if (f.size() != 5) throw DataError(where + ": expected 5 fields, got " + std::to_string(f.size()));
    ManifestRow r{f[0], f[1], parse_count(f[2], where), f[3], parse_count(f[4], where)};
    if (r.clip_id.empty() || r.subject_id.empty() || r.frame_dir.empty()) throw DataError(where + ": empty field");
    m.rows.push_back(std::move(r));
  }
  m.validate();
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const auto table = class_table_path(path);
  return parse_manifest(slurp(path), slurp(table), path.string());
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  manifest.validate();
  std::ostringstream csv;
  csv << kManifestHeader << '\n';
  for (const auto& r : manifest.rows) {
    check_field(r.clip_id, "clip_id");
    check_field(r.subject_id, "subject_id");
    check_field(r.frame_dir, "frame_dir");
    csv << r.clip_id << ',' << r.subject_id << ',' << r.label << ',' << r.frame_dir << ',' << r.num_frames << '\n';
  }
  std::ostringstream cls;
  for (const auto& c : manifest.classes) {
    check_field(c, "class name");
    cls << c << '\n';
  }
  for (const auto& [p, text] : {std::pair{path, csv.str()}, std::pair{class_table_path(path), cls.str()}}) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
    if (!out) throw DataError("write failed for " + p.string());
  }
}

std::filesystem::path resolve_frame_dir(const std::filesystem::path& manifest_path, const ManifestRow& row) {
  const std::filesystem::path dir(row.frame_dir);
  if (dir.is_absolute()) return dir;
  return manifest_path.parent_path() / dir;
}

void check_frames_on_disk(const std::filesystem::path& manifest_path, const Manifest& manifest) {
  for (const auto& r : manifest.rows) {
    const auto dir = resolve_frame_dir(manifest_path, r);
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw DataError("frame directory " + dir.string() + " is missing");
    std::size_t count = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && name.rfind("frame_", 0) == 0) ++count;
    }
    if (count != r.num_frames) {
      throw DataError("clip '" + r.clip_id + "' lists " + std::to_string(r.num_frames) + " frames but " +
                      dir.string() + " holds " + std::to_string(count));
    }
  }
}

VideoClip load_clip(const std::filesystem::path& manifest_path, const ManifestRow& row) {
  VideoClip clip{row.clip_id, row.subject_id, row.label, {}};
  const auto dir = resolve_frame_dir(manifest_path, row);
  clip.frames.reserve(row.num_frames);
  for (std::size_t i = 0; i < row.num_frames; ++i) {
    clip.frames.push_back(read_image(dir / frame_file_name(i)));
    if (!clip.frames.back().same_extent(clip.frames.front())) {
      throw DataError("clip '" + row.clip_id + "': frame " + std::to_string(i) + " extent differs from frame 0");
    }
  }
  return clip;
}

std::vector<VideoClip> load_clips(const std::filesystem::path& manifest_path, const Manifest& manifest) {
  std::vector<VideoClip> clips;
  clips.reserve(manifest.rows.size());
  for (const auto& r : manifest.rows) clips.push_back(load_clip(manifest_path, r));
  return clips;
}

}  // namespace fdp::data
