#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fdp/app/checkpoint.hpp"
#include "fdp/app/experiment.hpp"
#include "fdp/app/gradcheck_suite.hpp"
#include "fdp/data/synth.hpp"
#include "fdp/eval/ranksum.hpp"
#include "fdp/oracle/dynamic_image.hpp"

namespace fs = std::filesystem;
using namespace fdp;

namespace {

struct CommonRun {
  std::string config;
  std::string manifest;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

app::RunConfig load_run_config(const CommonRun& o) {
  app::RunConfig cfg = o.config.empty() ? app::RunConfig{} : app::read_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.deterministic) cfg.deterministic = true;
  cfg.validate();
  return cfg;
}

struct LoadedSet {
  data::Manifest manifest;
  std::vector<data::VideoClip> clips;
};

LoadedSet load_set(const std::string& path) {
  if (path.empty()) throw UsageError("--manifest is required");
  LoadedSet s;
  s.manifest = data::read_manifest(path);
  data::check_frames_on_disk(path, s.manifest);
  s.clips = data::load_clips(path, s.manifest);
  return s;
}

void print_line(const std::string& s) {
  std::cout << s << '\n';
  std::cout.flush();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("write failed for " + path);
}

int cmd_gen_synth(const data::SynthSpec& spec, const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  const auto path = data::synth_generate(spec, out);
  print_line("wrote " + std::to_string(spec.num_clips()) + " clips, manifest " + path.string());
  return 0;
}

int cmd_train(const CommonRun& o, const std::string& log_path) {
  if (o.out.empty()) throw UsageError("--out is required");
  const auto cfg = load_run_config(o);
  const auto set = load_set(o.manifest);
  app::check_clips(set.clips, cfg, set.manifest.num_classes());
  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::binary | std::ios::trunc);
    if (!log_file) throw DataError("cannot write " + log_path);
  }
  app::Trainer trainer(cfg, set.manifest.num_classes());
  trainer.fit(set.clips, [&](const app::EpochStats& s) {
    const auto line = app::format_epoch(s);
    print_line(line);
    if (log_file) log_file << line << '\n';
    return true;
  });
  app::save_checkpoint(o.out, cfg, set.manifest.classes, trainer.model());
  print_line("checkpoint " + o.out);
  return 0;
}

int cmd_eval(const CommonRun& o, const std::string& protocol, const std::string& checkpoint,
             const std::string& train_manifest) {
  const auto set = load_set(o.manifest);
  app::RunOutcome run;
  if (!checkpoint.empty()) {
    if (protocol != "cross") throw UsageError("--checkpoint is only valid with --protocol cross");
    if (!train_manifest.empty()) throw UsageError("--checkpoint and --train-manifest are exclusive");
    auto ck = app::load_checkpoint(checkpoint);
    run = app::evaluate_checkpoint(ck, set.clips, set.manifest.classes);
    run.protocol = "cross";
  } else {
    const auto cfg = load_run_config(o);
    if (protocol == "loso") {
      run = app::run_folds(cfg, set.clips, set.manifest.classes, eval::loso_split(set.manifest), "loso", print_line);
    } else if (protocol == "holdout") {
      auto held = cfg.holdout_subjects;
      if (held.empty()) held = {eval::subjects_of(set.manifest).back()};
      run = app::run_folds(cfg, set.clips, set.manifest.classes, eval::holdout_split(set.manifest, held), "holdout",
                           print_line);
    } else if (protocol == "cross") {
      if (train_manifest.empty()) throw UsageError("cross protocol needs --checkpoint or --train-manifest");
      const auto train = load_set(train_manifest);
      if (train.manifest.classes != set.manifest.classes) {
        throw DataError("training and test manifests have different class tables");
      }
      run = app::run_cross(cfg, train.clips, set.clips, set.manifest.classes, print_line);
    } else {
      throw UsageError("unknown protocol '" + protocol + "' (loso, holdout or cross)");
    }
  }
  const auto report = app::report_json(run);
  const auto s = app::aggregate(run);
  char buf[200];
  std::snprintf(buf, sizeof buf, "acc %.4f f1 %.4f uar %s war %.4f average_mse %.6f", s.accuracy, s.f1,
                s.uar ? std::to_string(*s.uar).c_str() : "n/a", s.war, s.average_mse);
  print_line(buf);
  if (!o.out.empty()) write_text(o.out, report);
  else std::cout << report;
  return 0;
}

int cmd_dynimg(const std::string& dir, const std::string& out) {
  if (dir.empty() || out.empty()) throw UsageError("--frames and --out are required");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("frame directory " + dir + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) throw DataError(dir + " holds " + std::to_string(files.size()) + " frames, need at least 2");
  std::vector<data::Image> frames;
  for (const auto& f : files) frames.push_back(data::read_image(f));
  data::write_image(out, oracle::dynamic_image(frames));
  print_line("wrote " + out + " from " + std::to_string(frames.size()) + " frames");
  return 0;
}

int cmd_gradcheck(std::size_t points) {
  bool ok = true;
  for (const auto& e : app::run_gradcheck_suite(points)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-20s %-6s max_rel_err %.3e tol %.0e %s", e.name.c_str(), e.precision.c_str(),
                  e.max_rel_error, e.tolerance, e.passed() ? "ok" : "FAIL");
    print_line(buf);
    ok = ok && e.passed();
  }
  if (!ok) throw NumericalError("gradient check failed");
  return 0;
}

std::vector<double> parse_values(const std::string& inline_list, const std::string& file, const char* which) {
  std::string text = inline_list;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DataError(std::string("sample ") + which + ": '" + tok + "' is not a number");
    }
  }
  return v;
}

int cmd_ranksum(const std::string& a, const std::string& b, const std::string& a_file, const std::string& b_file,
                const std::string& sided) {
  eval::Sidedness side;
  if (sided == "two") side = eval::Sidedness::kTwoSided;
  else if (sided == "less") side = eval::Sidedness::kLess;
  else if (sided == "greater") side = eval::Sidedness::kGreater;
  else throw UsageError("--sided must be two, less or greater");
  const auto va = parse_values(a, a_file, "a"), vb = parse_values(b, b_file, "b");
  const auto r = eval::wilcoxon_rank_sum(va, vb, side);
  char buf[200];
  std::snprintf(buf, sizeof buf, "W %.6g z %.6f p %.6g", r.w, r.z, r.p);
  std::string line = buf;
  if (r.p_exact) {
    std::snprintf(buf, sizeof buf, " p_exact %.6g", *r.p_exact);
    line += buf;
  }
  print_line(line);
  return 0;
}

void add_run_flags(CLI::App* cmd, CommonRun& o) {
  cmd->add_option("--config", o.config, "Run configuration (key = value lines)");
  cmd->add_option("--manifest", o.manifest, "Clip manifest CSV");
  cmd->add_option("--seed", o.seed, "Override the configured seed");
  cmd->add_flag("--deterministic", o.deterministic, "Single worker, reproducible logs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Micro-expression recognition with rank-pooled dynamics"};
  cli.require_subcommand(1);

  data::SynthSpec spec;
  std::string synth_out;
  auto* gen = cli.add_subcommand("gen-synth", "Write a synthetic micro-motion dataset");
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->add_option("--seed", spec.seed, "Generator seed");
  gen->add_option("--subjects", spec.num_subjects, "Number of subjects");
  gen->add_option("--classes", spec.num_classes, "Number of classes");
  gen->add_option("--clips-per-cell", spec.clips_per_cell, "Clips per subject and class");
  gen->add_option("--frames", spec.frames_per_clip, "Frames per clip");
  gen->add_option("--amplitude", spec.amplitude, "Blob travel in pixels");
  gen->add_option("--noise", spec.noise, "Per-pixel noise standard deviation");

  CommonRun train_opts;
  std::string log_path;
  auto* train = cli.add_subcommand("train", "Train a model and write a checkpoint");
  add_run_flags(train, train_opts);
  train->add_option("--out", train_opts.out, "Checkpoint path")->required();
  train->add_option("--log", log_path, "Also write epoch lines to this file");

  CommonRun eval_opts;
  std::string protocol = "loso", checkpoint, train_manifest;
  auto* ev = cli.add_subcommand("eval", "Evaluate under a protocol and write a JSON report");
  add_run_flags(ev, eval_opts);
  ev->add_option("--protocol", protocol, "loso, holdout or cross");
  ev->add_option("--checkpoint", checkpoint, "Trained checkpoint (cross protocol)");
  ev->add_option("--train-manifest", train_manifest, "Training manifest (cross protocol)");
  ev->add_option("--out", eval_opts.out, "Report path (default: stdout)");

  std::string frames_dir, dynimg_out;
  auto* dyn = cli.add_subcommand("dynimg", "Write the oracle dynamic image of a frame directory");
  dyn->add_option("--frames", frames_dir, "Directory of PPM/PGM frames")->required();
  dyn->add_option("--out", dynimg_out, "Output PGM")->required();

  std::size_t points = 5;
  auto* gc = cli.add_subcommand("gradcheck", "Finite-difference checks of every op and the full loss");
  gc->add_option("--points", points, "Random points per op");

  auto* stats = cli.add_subcommand("stats", "Statistical tests");
  stats->require_subcommand(1);
  std::string a, b, a_file, b_file, sided = "two";
  auto* rs = stats->add_subcommand("ranksum", "Wilcoxon rank-sum test of two samples");
  rs->add_option("--a", a, "Sample a, comma or space separated");
  rs->add_option("--b", b, "Sample b, comma or space separated");
  rs->add_option("--a-file", a_file, "File holding sample a");
  rs->add_option("--b-file", b_file, "File holding sample b");
  rs->add_option("--sided", sided, "two, less (a below b) or greater");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_synth(spec, synth_out);
    if (*train) return cmd_train(train_opts, log_path);
    if (*ev) return cmd_eval(eval_opts, protocol, checkpoint, train_manifest);
    if (*dyn) return cmd_dynimg(frames_dir, dynimg_out);
    if (*gc) return cmd_gradcheck(points);
    if (*rs) return cmd_ranksum(a, b, a_file, b_file, sided);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
