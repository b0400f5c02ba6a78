#include "fdp/app/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace fdp::app {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || end != v.data() + v.size()) {
    throw UsageError("config: " + key + " expects a nonnegative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_double(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  in.imbue(std::locale::classic());
  double out = 0;
  in >> out;
  if (v.empty() || in.fail() || !in.eof() || !std::isfinite(out)) {
    throw UsageError("config: " + key + " expects a finite number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config: " + key + " expects true or false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : to_list(v)) out.push_back(to_size(key, s));
  if (out.empty()) throw UsageError("config: " + key + " expects a nonempty list");
  return out;
}

// Shortest decimal text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

template <class C>
std::string join(const C& items) {
  std::ostringstream o;
  bool first = true;
  for (const auto& i : items) {
    o << (first ? "" : ",") << i;
    first = false;
  }
  return o.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FDP_SIZE(name, member)                                                                         \
  {                                                                                                    \
    name, {                                                                                            \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_size(k, v); },       \
          [](const RunConfig& c) { return std::to_string(c.member); }                                  \
    }                                                                                                  \
  }
#define FDP_DOUBLE(name, member)                                                                       \
  {                                                                                                    \
    name, {                                                                                            \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); },     \
          [](const RunConfig& c) { return fmt_double(c.member); }                                      \
    }                                                                                                  \
  }
#define FDP_BOOL(name, member)                                                                         \
  {                                                                                                    \
    name, {                                                                                            \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_bool(k, v); },       \
          [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }                  \
    }                                                                                                  \
  }
#define FDP_SIZES(name, member)                                                                        \
  {                                                                                                    \
    name, {                                                                                            \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_sizes(k, v); },      \
          [](const RunConfig& c) { return join(c.member); }                                            \
    }                                                                                                  \
  }

// Ordered as they appear in the canonical text.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      FDP_SIZE("frames", frames),
      FDP_DOUBLE("lambda_mer", lambda_mer),
      FDP_DOUBLE("lambda_dic", lambda_dic),
      FDP_DOUBLE("lambda_rank", lambda_rank),
      FDP_DOUBLE("rank_slope", rank_slope),
      FDP_DOUBLE("learning_rate", learning_rate),
      FDP_SIZE("batch_size", batch_size),
      FDP_SIZE("epochs", epochs),
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      FDP_BOOL("deterministic", deterministic),
      FDP_BOOL("augment", augment),
      FDP_SIZE("source_extent", preprocess.source_extent),
      FDP_SIZE("downsample", preprocess.downsample),
      FDP_SIZE("crop", preprocess.crop),
      FDP_BOOL("flip", preprocess.flip),
      FDP_SIZE("stem_channels", encoder.stem_channels),
      FDP_SIZE("stem_kernel", encoder.stem_kernel),
      FDP_SIZE("stem_stride", encoder.stem_stride),
      FDP_SIZES("stage_channels", encoder.stage_channels),
      FDP_SIZES("patches", encoder.patches),
      FDP_SIZE("num_local", encoder.num_local),
      FDP_SIZE("num_global", encoder.num_global),
      FDP_SIZE("heads", encoder.heads),
      FDP_SIZE("mlp_ratio", encoder.mlp_ratio),
      FDP_DOUBLE("dropout", encoder.dropout),
      FDP_SIZE("dyn_channels", dyn_channels),
      FDP_SIZE("mer_hidden", mer_hidden),
      FDP_SIZES("dic_channels", dic.channels),
      FDP_SIZES("dic_up_channels", dic.up_channels),
      FDP_DOUBLE("leaky_slope", dic.leaky_slope),
      {"f1_average",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "macro") c.f1_average = eval::F1Average::kMacro;
          else if (v == "weighted") c.f1_average = eval::F1Average::kWeighted;
          else throw UsageError("config: " + k + " expects macro or weighted, got '" + v + "'");
        },
        [](const RunConfig& c) {
          return std::string(c.f1_average == eval::F1Average::kMacro ? "macro" : "weighted");
        }}},
      {"aggregation",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "pooled") c.aggregation = Aggregation::kPooled;
          else if (v == "fold_mean") c.aggregation = Aggregation::kFoldMean;
          else throw UsageError("config: " + k + " expects pooled or fold_mean, got '" + v + "'");
        },
        [](const RunConfig& c) {
          return std::string(c.aggregation == Aggregation::kPooled ? "pooled" : "fold_mean");
        }}},
      {"holdout_subjects",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.holdout_subjects = to_list(v); },
        [](const RunConfig& c) { return join(c.holdout_subjects); }}},
  };
  return table;
}

#undef FDP_SIZE
#undef FDP_DOUBLE
#undef FDP_BOOL
#undef FDP_SIZES

}  // namespace

void RunConfig::validate() const {
  if (frames == 0 || batch_size == 0 || epochs == 0) throw UsageError("config: frames, batch_size and epochs must be >= 1");
  if (!(learning_rate > 0)) throw UsageError("config: learning_rate must be positive");
  if (lambda_mer < 0 || lambda_dic < 0 || lambda_rank < 0) throw UsageError("config: loss weights must be >= 0");
  if (!(rank_slope > 0)) throw UsageError("config: rank_slope must be positive");
  preprocess.validate();
  if (encoder.dropout < 0 || encoder.dropout >= 1) throw UsageError("config: dropout must lie in [0, 1)");
  model(2).validate();
}

model::ModelConfig RunConfig::model(std::size_t num_classes) const {
  model::ModelConfig m;
  m.encoder = encoder;
  m.encoder.input_size = preprocess.crop;
  m.frames = frames;
  m.dyn_channels = dyn_channels;
  m.mer_hidden = mer_hidden;
  m.num_classes = num_classes;
  m.dic = dic;
  return m;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, f] : fields()) {
    if (name == key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw UsageError("config: unknown key '" + key + "'");
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(no) + ": ";
    if (eq == std::string::npos) throw UsageError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw UsageError(where + "key '" + key + "' repeated");
    try {
      apply_setting(cfg, key, value);
    } catch (const UsageError& e) {
      throw UsageError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string to_text(const RunConfig& cfg) {
  std::ostringstream o;
  for (const auto& [name, f] : fields()) o << name << " = " << f.get(cfg) << '\n';
  return o.str();
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : to_text(cfg)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, f] : fields()) keys.push_back(name);
  return keys;
}

}  // namespace fdp::app
