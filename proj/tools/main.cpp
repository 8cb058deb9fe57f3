#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lframes/audit.hpp"
#include "lframes/datasets.hpp"
#include "lframes/nn.hpp"
#include "lframes/report.hpp"
#include "lframes/train.hpp"

namespace fs = std::filesystem;
using namespace lframes;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> frames;
  bool refine = false;
  std::string out = "out";
};

struct ExtraOptions {
  std::string checkpoint;
  int transforms = 8;
  int samples = 4;
  std::vector<double> sigmas{0.0, 0.01, 0.02, 0.05, 0.1};
  std::vector<std::uint64_t> seeds;
  std::vector<double> fractions{0.25, 0.5, 1.0};
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Task or pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed for data, initialisation and training");
  cmd->add_option("--mode", o.mode, "Message mode")->check(CLI::IsMember({"scalar", "tensorial"}));
  cmd->add_option("--frames", o.frames, "Frame provenance")
      ->check(CLI::IsMember({"learned", "pca", "random", "constant", "identity"}));
  cmd->add_flag("--refine", o.refine, "Enable frame refinement on every message, encoder and decoder layer");
  cmd->add_option("--out", o.out, "Output directory");
}

TaskSpec load_spec(const CommonOptions& o) {
  TaskSpec spec = o.config.empty() ? TaskSpec::from_json_string("{}") : TaskSpec::from_file(o.config);
  if (o.seed) spec.seed = *o.seed;
  if (o.mode) spec.pipeline = spec.pipeline.with_mode(message_mode_from_string(*o.mode));
  if (o.frames) spec.pipeline = spec.pipeline.with_frames(frame_provenance_from_string(*o.frames));
  if (o.refine) spec.pipeline = spec.pipeline.with_refine(true);
  spec.pipeline.validate();
  return spec;
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_checkpoint(Pipeline& model, const std::string& dir, const TaskSpec& spec, long steps) {
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (auto& [name, m] : model.state_tensors()) tensors.emplace_back(name, m);
  nn::save_checkpoint(path_in(dir, "checkpoint.bin"), path_in(dir, "checkpoint.json"), tensors,
                      {{"seed", std::to_string(spec.seed)},
                       {"steps", std::to_string(steps)},
                       {"config", spec.to_json_string()}});
}

// Model for the audits: trained weights from --checkpoint when given, else a
// fresh initialisation.
Pipeline audit_model(const TaskSpec& spec, const std::string& checkpoint) {
  Pipeline model(spec.pipeline, spec.seed);
  if (!checkpoint.empty()) {
    const fs::path bin(checkpoint);
    const fs::path manifest = bin.parent_path() / (bin.stem().string() + ".json");
    nn::load_checkpoint(bin.string(), manifest.string(), model.state_tensors());
  }
  return model;
}

int run_command(const std::string& name, const CommonOptions& o, const ExtraOptions& x) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.command = name;
  int code = kExitOk;
  try {
    const TaskSpec spec = load_spec(o);
    report.seed = spec.seed;
    report.config_json = spec.to_json_string();
    fs::create_directories(o.out);

    if (name == "gen-data") {
      const Dataset train_set = generate_dataset(spec.train_data());
      const Dataset eval_set = generate_dataset(spec.eval_data());
      write_dataset(path_in(o.out, "train"), train_set);
      write_dataset(path_in(o.out, "eval"), eval_set);
      report.summary["train_samples"] = static_cast<double>(train_set.samples.size());
      report.summary["eval_samples"] = static_cast<double>(eval_set.samples.size());
    } else if (name == "train") {
      Pipeline model(spec.pipeline, 0);
      const TrainResult r = run_task(spec, &model);
      report.metrics = r.history;
      report.summary["final_metric"] = r.final_metric;
      report.summary["final_loss"] = r.final_loss;
      report.summary["parameters"] = static_cast<double>(r.parameters);
      report.summary["train_seconds"] = r.seconds;
      write_text_atomic(path_in(o.out, "metrics.csv"), metrics_csv(r.history));
      write_checkpoint(model, o.out, spec, spec.train.steps);
    } else if (name == "audit-equivariance") {
      Pipeline model = audit_model(spec, x.checkpoint);
      Dataset data = generate_dataset(spec.eval_data());
      if (static_cast<int>(data.samples.size()) > x.samples) data.samples.resize(x.samples);
      report.equivariance = audit_equivariance(model, data, x.transforms, spec.seed);
      report.summary["max_deviation"] = max_deviation(report.equivariance);
      write_text_atomic(path_in(o.out, "equivariance.csv"), equivariance_csv(report.equivariance));
    } else if (name == "audit-stability") {
      const FrameProvenance p = spec.pipeline.frames.type;
      if (p != FrameProvenance::learned && p != FrameProvenance::pca)
        throw PipelineConfigError("audit-stability needs --frames learned or pca", -1);
      Pipeline model = audit_model(spec, x.checkpoint);
      Dataset data = generate_dataset(spec.eval_data());
      if (static_cast<int>(data.samples.size()) > x.samples) data.samples.resize(x.samples);
      report.stability = audit_frame_stability(model, data, x.sigmas, p, spec.seed);
      write_text_atomic(path_in(o.out, "stability.csv"), stability_csv(report.stability));
    } else if (name == "ablate") {
      std::vector<std::uint64_t> seeds = x.seeds;
      if (seeds.empty()) seeds = {spec.seed, spec.seed + 1, spec.seed + 2};
      report.ablation = ablation_matrix(spec, seeds);
      for (const auto& c : report.ablation)
        report.summary[std::string(to_string(c.mode)) + "+" + to_string(c.frames)] = c.median;
      write_text_atomic(path_in(o.out, "ablation.csv"), ablation_csv(report.ablation));
    } else if (name == "sweep") {
      for (double f : x.fractions)
        if (!(f > 0.0 && f <= 1.0)) throw PipelineConfigError("sweep fractions must lie in (0, 1]", -1);
      report.sweep = data_efficiency_sweep(spec, x.fractions);
      write_text_atomic(path_in(o.out, "sweep.csv"), sweep_csv(report.sweep));
    }
  } catch (const PipelineConfigError& e) {
    report.status = "config_error";
    report.error = e.what();
    code = kExitConfig;
  } catch (const DivergenceError& e) {
    report.status = "diverged";
    report.error = e.what();
    code = kExitDiverged;
  } catch (const std::invalid_argument& e) {
    report.status = "config_error";
    report.error = e.what();
    code = kExitConfig;
  } catch (const std::exception& e) {
    report.status = "error";
    report.error = e.what();
    code = kExitFailure;
  }
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (code != kExitOk) std::cerr << "lframes " << name << ": " << report.error << "\n";
  try {
    fs::create_directories(o.out);
    write_text_atomic(path_in(o.out, "report.json"), report_to_json(report));
  } catch (const std::exception& e) {
    std::cerr << "lframes: cannot write report: " << e.what() << "\n";
    if (code == kExitOk) code = kExitFailure;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equivariant message passing with local frames"};
  app.require_subcommand(1);
  CommonOptions common;
  ExtraOptions extra;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "Write train and eval datasets"},
      {"train", "Train a pipeline and write metrics and a checkpoint"},
      {"audit-equivariance", "Measure output deviation under O(3) transforms and translations"},
      {"audit-stability", "Measure frame drift under positional noise"},
      {"ablate", "Train the message mode x frame provenance grid"},
      {"sweep", "Data efficiency of built-in equivariance against augmentation"}};
  for (const auto& [name, help] : commands) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    if (name == "audit-equivariance" || name == "audit-stability") {
      cmd->add_option("--checkpoint", extra.checkpoint, "checkpoint.bin from a train run")
          ->check(CLI::ExistingFile);
      cmd->add_option("--samples", extra.samples, "Evaluation clouds to audit")->check(CLI::NonNegativeNumber);
    }
    if (name == "audit-equivariance")
      cmd->add_option("--transforms", extra.transforms, "Transforms per cloud")->check(CLI::NonNegativeNumber);
    if (name == "audit-stability") cmd->add_option("--sigmas", extra.sigmas, "Noise scales")->delimiter(',');
    if (name == "ablate") cmd->add_option("--seeds", extra.seeds, "Seeds per cell")->delimiter(',');
    if (name == "sweep") cmd->add_option("--fractions", extra.fractions, "Training set fractions")->delimiter(',');
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  return run_command(app.get_subcommands().front()->get_name(), common, extra);
}
