// agentreg: synth / train / eval / ablate / report, plus phase for inspecting
// the phase texture of a PGM/PPM image.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "agentreg/config.hpp"
#include "agentreg/error.hpp"
#include "agentreg/image_io.hpp"
#include "agentreg/phase.hpp"
#include "agentreg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace agentreg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return kExitConfig;
    case ErrorKind::kNumerical:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant;
  std::string data;
  std::string checkpoint;
  std::string input;
  std::string resume;
  std::string image;
  bool oracle_pose = false;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.variant.empty()) cfg.variant = variant_by_name(o.variant);
  cfg.validate();
  return cfg;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) fail(ErrorKind::kIo, "cannot write " + path.string());
  return f;
}

void save_config(const fs::path& path, const ExperimentConfig& cfg) {
  auto f = open_out(path);
  write_config(f, cfg);
}

int cmd_synth(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const Dataset d = generate_dataset(cfg, cfg.seed);
  write_dataset(o.out, d);
  save_config(fs::path(o.out) / "config.txt", cfg);
  std::cout << "wrote " << d.size() << " pairs (" << d.train.size() << " train, " << d.val.size()
            << " val, " << d.test.size() << " test) to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const Dataset d = read_dataset(o.data);
  make_dir(o.out);
  std::optional<Model> start;
  if (!o.resume.empty()) start = load_checkpoint(o.resume);
  const TrainResult r = [&] {
    try {
      return train_model(cfg, d.train, nullptr, start ? &*start : nullptr);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kNumerical) {
        auto f = open_out(fs::path(o.out) / "nan_dump.txt");
        f << e.what() << '\n';
        write_config(f, cfg);
      }
      throw;
    }
  }();
  if (r.log.empty()) {
    std::cout << "checkpoint already at epoch " << r.model.epoch << ", nothing to train\n";
  }
  {
    auto f = open_out(fs::path(o.out) / "train_log.csv");
    write_train_log(f, r.log);
  }
  {
    auto f = open_out(fs::path(o.out) / "checkpoint.bin", true);
    save_checkpoint(f, r.model);
  }
  save_config(fs::path(o.out) / "config.txt", cfg);
  if (!r.log.empty()) {
    std::cout << "variant " << variant_name(cfg.variant) << ", " << r.log.size() << " epochs, L_t "
              << r.log.front().task_loss << " -> " << r.log.back().task_loss << '\n';
  }
  std::cout << "deployed agents:";
  for (auto q : r.model.deployed_agents()) std::cout << ' ' << q;
  std::cout << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const Model model = load_checkpoint(o.checkpoint);
  const Dataset d = read_dataset(o.data);
  EvalOptions opts;
  opts.oracle_pose = o.oracle_pose;
  const MetricReport rep = evaluate_model(model, d.test, cfg, opts);
  make_dir(o.out);
  {
    auto f = open_out(fs::path(o.out) / "report.csv");
    write_report_csv(f, rep);
  }
  {
    auto f = open_out(fs::path(o.out) / "report.json");
    write_report_json(f, rep);
  }
  std::cout << std::fixed << std::setprecision(4) << "pairs " << rep.pairs.size() << (rep.empty ? " (empty)" : "")
            << "  IR " << rep.ir << "  FMR " << rep.fmr << "  RR " << rep.rr << "  PIR " << rep.pir << '\n';
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  ExperimentConfig cfg = load(o);
  if (o.seed) cfg.ablation_seeds = {*o.seed};
  std::optional<Dataset> shared;
  if (!o.data.empty()) shared = read_dataset(o.data);
  const AblationResult r = run_ablation(cfg, shared ? &*shared : nullptr);
  make_dir(o.out);
  {
    auto f = open_out(fs::path(o.out) / "ablation.csv");
    write_ablation_csv(f, r);
  }
  {
    auto f = open_out(fs::path(o.out) / "ablation.md");
    write_ablation_markdown(f, r);
  }
  write_ablation_markdown(std::cout, r);
  return kExitOk;
}

int cmd_phase(const Options& o) {
  const Tensor image = read_pnm(o.image);
  const PhaseMap pm = extract_phase_map(image);
  make_dir(o.out);
  save_tensor((fs::path(o.out) / "texture.bin").string(), pm.texture);
  double lo = pm.texture[0], hi = pm.texture[0];
  for (double v : pm.texture.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const std::string view = pm.texture.dim(2) == 1 ? "texture.pgm" : "texture.ppm";
  write_pnm((fs::path(o.out) / view).string(), pm.texture, lo, hi);
  std::cout << image.dim(0) << "x" << image.dim(1) << "x" << image.dim(2) << ", amplitude constants";
  for (double c : pm.amplitude_constant) std::cout << ' ' << c;
  std::cout << '\n';
  return kExitOk;
}

int cmd_report(const Options& o) {
  std::ifstream in(o.input);
  if (!in) fail(ErrorKind::kIo, "cannot read " + o.input);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, o.input + ": " + e.what());
  }
  if (!j.contains("scenes") || !j.contains("mean")) fail(ErrorKind::kFormat, o.input + ": not a metric report");
  std::cout << "| Scene | IR | FMR | RR | PIR |\n|---|---|---|---|---|\n" << std::fixed << std::setprecision(4);
  auto row = [](const std::string& name, const nlohmann::json& m) {
    std::cout << "| " << name << " | " << m.at("IR").get<double>() << " | " << m.at("FMR").get<double>()
              << " | " << m.at("RR").get<double>() << " | " << m.at("PIR").get<double>() << " |\n";
  };
  try {
    for (const auto& [name, m] : j.at("scenes").items()) row(name, m);
    row("mean", j.at("mean"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, o.input + ": " + e.what());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image to point cloud registration with reliable agents"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the seed");
    sub->add_option("--variant", o.variant, "M1..M8");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", o.out, "dataset directory")->required();

  auto* train = app.add_subcommand("train", "train on a dataset");
  add_common(train);
  train->add_option("--data", o.data, "dataset directory")->required();
  train->add_option("--out", o.out, "run directory")->required();
  train->add_option("--resume", o.resume, "continue from a checkpoint")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", o.data, "dataset directory")->required();
  eval->add_option("--out", o.out, "report directory")->required();
  eval->add_flag("--debug-oracle-pose", o.oracle_pose, "use the ground-truth pose as the estimate");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate M1, M6, M7, M8");
  add_common(ablate);
  ablate->add_option("--data", o.data, "shared dataset (default: one generated per seed)");
  ablate->add_option("--out", o.out, "output directory")->required();

  auto* report = app.add_subcommand("report", "print a report.json as a table");
  report->add_option("--in", o.input, "report.json")->required();

  auto* phase = app.add_subcommand("phase", "export the phase texture of a PGM/PPM image");
  phase->add_option("--image", o.image, "P5 or P6 image")->required()->check(CLI::ExistingFile);
  phase->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
    if (*phase) return cmd_phase(o);
    return cmd_report(o);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
