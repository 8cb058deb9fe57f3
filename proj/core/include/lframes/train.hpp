// Desk-scale training loops, the mode x frames ablation grid and the data
// efficiency sweep.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lframes/datasets.hpp"
#include "lframes/mp.hpp"

namespace lframes {

struct TrainConfig {
  long steps = 1000;
  double lr = 3e-3;
  long warmup = 50;
  double clip = 0.5;
  double weight_decay = 1e-4;
  double label_smoothing = 0.3;
  long eval_every = 100;
  /// Data-augmentation baseline: run_task swaps the configured frames for one
  /// random constant frame per step.
  bool augment = false;
};

/// Default desk-scale pipeline for a task.
PipelineConfig default_pipeline(TaskKind task);

/// Everything one run needs; `seed` determines data and initialisation.
struct TaskSpec {
  DatasetSpec data;
  int eval_count = 8;
  PipelineConfig pipeline;
  TrainConfig train;
  std::uint64_t seed = 0;

  /// Accepts either a task document {task, dataset, pipeline, train, seed} or
  /// a bare pipeline config (layers at top level). Throws PipelineConfigError.
  static TaskSpec from_json_string(const std::string& text);
  static TaskSpec from_file(const std::string& path);
  std::string to_json_string() const;

  /// Dataset specs derived from the seed.
  DatasetSpec train_data() const;
  DatasetSpec eval_data() const;
};

struct MetricRow {
  long step = 0;
  double loss = 0.0;
  double metric = 0.0;       // train metric of the step's sample
  std::optional<double> eval_metric;  // set on evaluation steps
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct TrainResult {
  std::vector<MetricRow> history;
  double final_metric = 0.0;
  double final_loss = 0.0;
  double seconds = 0.0;
  std::size_t parameters = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss and metric of one sample on a fresh tape. Metric is the mean cosine
/// for regression tasks and 0/1 accuracy for classification.
struct LossEval {
  nn::Var loss;
  double metric = 0.0;
};
LossEval sample_loss(nn::Tape& tape, Pipeline& model, const Sample& sample, TaskKind task,
                     const ForwardOptions& opt, double label_smoothing);

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;
};

/// Mean loss and metric over a dataset in evaluation mode.
EvalResult evaluate(Pipeline& model, const Dataset& data, std::uint64_t frame_seed, double label_smoothing = 0.0);

/// Frame seed used at training step `step`.
std::uint64_t step_frame_seed(std::uint64_t seed, long step);

/// Throws DivergenceError when the loss or gradient becomes non-finite.
TrainResult train(Pipeline& model, const Dataset& train_set, const Dataset& eval_set, const TrainConfig& cfg,
                  std::uint64_t seed);

/// Builds data and model from the task spec and trains.
TrainResult run_task(const TaskSpec& spec, Pipeline* model_out = nullptr);

struct AblationCell {
  MessageMode mode = MessageMode::tensorial;
  FrameProvenance frames = FrameProvenance::learned;
  std::vector<std::uint64_t> seeds;
  std::vector<double> metrics;
  double median = 0.0;
  std::size_t parameters = 0;
  std::size_t frame_net_parameters = 0;
};

using AblationGrid = std::vector<std::pair<MessageMode, FrameProvenance>>;
/// {learned, random} x {tensorial, scalar}.
AblationGrid full_ablation_grid();

std::vector<AblationCell> ablation_matrix(const TaskSpec& spec, const std::vector<std::uint64_t>& seeds,
                                          const AblationGrid& grid = full_ablation_grid());

double median(std::vector<double> v);

struct SweepRow {
  double fraction = 1.0;
  std::string mode;  // "equivariant" or "augmented"
  double final_error = 0.0;
};

/// Trains on the first ceil(fraction * count) training clouds, with the
/// configured frames and with per-step constant random frames.
std::vector<SweepRow> data_efficiency_sweep(const TaskSpec& spec, const std::vector<double>& fractions);

}  // namespace lframes
