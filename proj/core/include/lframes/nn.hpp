// Layers, losses and optimisation on top of the tape.
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lframes/tape.hpp"

namespace lframes::nn {

/// Per-channel standardisation over the rows of a batch with learnable scale
/// and shift. Running statistics are used in evaluation mode and for batches
/// with a single row.
class FeatureNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  FeatureNorm() = default;
  FeatureNorm(std::string name, int width);

  Var forward(Tape& tape, Var x, bool training);
  std::vector<Parameter*> parameters() { return {&scale_, &shift_}; }
  int width() const { return static_cast<int>(scale_.value.cols()); }

  const Matrix& running_mean() const { return running_mean_; }
  const Matrix& running_var() const { return running_var_; }
  /// Running statistics are state, not parameters; checkpoints carry them.
  std::vector<Matrix*> buffers() { return {&running_mean_, &running_var_}; }

 private:
  Parameter scale_;
  Parameter shift_;
  Matrix running_mean_;
  Matrix running_var_;
};

/// Fully connected network: affine -> [norm] -> SiLU for every hidden layer,
/// final layer affine only.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, std::vector<int> widths, Rng& rng, bool norm = false);

  Var forward(Tape& tape, Var x, bool training = true);

  int in_width() const { return widths_.front(); }
  int out_width() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  bool has_norm() const { return !norms_.empty(); }

  /// Sum over layers of (w_in + 1) * w_out.
  std::size_t parameter_count() const;
  /// Affine parameters plus normalisation scale/shift.
  std::size_t total_parameter_count() const;

  std::vector<Parameter*> parameters();
  std::vector<Matrix*> buffers();

  std::vector<Parameter>& weights() { return weights_; }
  std::vector<Parameter>& biases() { return biases_; }

 private:
  std::vector<int> widths_;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
  std::vector<FeatureNorm> norms_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(int fan_in, int fan_out, Rng& rng);

double silu(double x);

// Losses. All return 1 x 1 variables.
Var l1_loss(Var pred, Var target);
/// Mean over rows of the cosine between matching rows.
Var cosine_similarity(Var pred, Var target);
/// Mean over rows of -sum_c q_c log softmax(logits)_c with
/// q = (1 - smoothing) onehot + smoothing / C.
Var cross_entropy(Var logits, const std::vector<int>& labels, double smoothing);

struct AdamWConfig {
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

/// One decoupled-weight-decay Adam update of `params` using their gradients.
void adamw_step(const std::vector<Parameter*>& params, AdamWState& state, double lr,
                const AdamWConfig& cfg);

class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {}
  void step(double lr) { adamw_step(params_, state_, lr, cfg_); }
  void zero_grad();
  const AdamWState& state() const { return state_; }
  AdamWState& state() { return state_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  AdamWState state_;
};

/// Linear warmup from 0 to base_lr, then half-cosine decay to 0 at `total`.
double cosine_lr_schedule(long step, long total, long warmup, double base_lr);

/// Scales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);
double grad_norm(const std::vector<Parameter*>& params);

struct GradCheckResult {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // parameter name and entry of the worst relative error
};

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// with step h. Relative error of an entry is |a - n| / max(|a|, |n|, floor).
/// At most `max_entries_per_param` entries of each parameter are probed
/// (evenly strided) when positive.
GradCheckResult check_gradients(const std::function<Var(Tape&)>& loss_fn,
                                const std::vector<Parameter*>& params, double h = 1e-6,
                                double floor = 1e-6, int max_entries_per_param = 0);

// Checkpoints: raw little-endian doubles for every parameter and buffer in
// order, plus a JSON manifest with shapes and run metadata.
struct CheckpointManifest {
  std::vector<std::string> names;
  std::vector<std::pair<long, long>> shapes;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::string& bin_path, const std::string& manifest_path,
                     const std::vector<std::pair<std::string, const Matrix*>>& tensors,
                     const std::map<std::string, std::string>& meta);
/// Loads into the given tensors; names and shapes must match the manifest.
CheckpointManifest load_checkpoint(const std::string& bin_path, const std::string& manifest_path,
                                   const std::vector<std::pair<std::string, Matrix*>>& tensors);

}  // namespace lframes::nn
