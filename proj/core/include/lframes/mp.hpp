// Invariant message passing between local frames, and the PointNet++-style
// encoder / decoder / pooling pipeline built from it.
//
// Features flowing through the layers are always local-frame coordinates and
// therefore invariant. A layer in tensorial mode re-expresses a neighbour's
// features in the receiver's frame with rho(R_i R_j^T) before the message
// network sees them; scalar mode passes them through unchanged.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lframes/frames.hpp"
#include "lframes/geometry.hpp"
#include "lframes/nn.hpp"
#include "lframes/reps.hpp"

namespace lframes {

enum class MessageMode { scalar, tensorial };
enum class Aggregation { max, sum, mean };
enum class LayerType { message, encoder, decoder, pool, output };

const char* to_string(MessageMode m);
const char* to_string(Aggregation a);
const char* to_string(LayerType t);
MessageMode message_mode_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);
LayerType layer_type_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Canonicalisation

/// rho_in(R_i) F_i per node.
FeatureBlock canonicalize_in(const FeatureBlock& features, const FrameSet& frames, const RepSpec& rho_in);
FeatureBlock canonicalize_in(const PointCloud& cloud, const FrameSet& frames, const RepSpec& rho_in);
/// rho_out(R_i^T) f_i per node.
FeatureBlock decanonicalize_out(const FeatureBlock& features, const FrameSet& frames, const RepSpec& rho_out);

/// Input block of a cloud: its feature blocks concatenated in name order, or a
/// single constant 1 channel when it has none.
Matrix cloud_input_features(const PointCloud& cloud);

// ---------------------------------------------------------------------------
// Single message-passing layer

struct MessageOptions {
  MessageMode mode = MessageMode::tensorial;
  Aggregation aggregation = Aggregation::max;
  int radial_k = 16;
  double radial_max = 1.0;
  /// Feed the receiver's own features into the message network.
  bool include_receiver = true;
  /// Edge direction fed to the message network: x_i - x_j when true (general
  /// layer), x_j - x_i otherwise (encoder).
  bool receiver_minus_sender = true;
};

/// Per-edge features e_ij with their representation, rows aligned with the
/// graph's edges.
struct EdgeFeatures {
  nn::Var values;
  RepSpec spec;
};

/// Width of the message-network input.
int message_input_width(const RepSpec& in, const MessageOptions& opt, int edge_width = 0);

/// Neighbour features as seen by each edge's receiver: rho(R_i R_j^T) f_j in
/// tensorial mode, f_j in scalar mode. E x W.
nn::Var received_features(const Graph& graph, nn::Var center_frames, nn::Var source_frames,
                          nn::Var source_features, const RepSpec& spec, MessageMode mode);

/// Messages phi(...) for every edge, aggregated per center. `center_features`
/// is only read when opt.include_receiver is set.
nn::Var aggregate_messages(nn::Tape& tape, const Graph& graph, nn::Var center_frames,
                           nn::Var source_frames, nn::Var source_features, nn::Var center_features,
                           const RepSpec& spec, nn::Mlp& phi, const MessageOptions& opt, bool training,
                           const EdgeFeatures* edges = nullptr);

/// f_i <- psi(f_i, aggregate_j phi(f_i, T f_j, rho_e(R_i) e_ij, radial, R_i unit(x_i - x_j))).
/// Source and center node sets coincide.
nn::Var message_layer(nn::Tape& tape, const Graph& graph, nn::Var frames, nn::Var features,
                      const RepSpec& spec, nn::Mlp& phi, nn::Mlp& psi, const MessageOptions& opt,
                      bool training, const EdgeFeatures* edges = nullptr);

/// Decoder interpolation: for every target, the inverse-distance weighted mean
/// of T f_j over its k nearest sources (fewer when there are fewer sources).
/// Distances are clamped below at 1e-9.
nn::Var interpolate_features(nn::Tape& tape, const Matrix& target_positions, nn::Var target_frames,
                             const Matrix& source_positions, nn::Var source_frames, nn::Var source_features,
                             const RepSpec& spec, MessageMode mode, int k = 3);

/// Pool anchor: the node closest to the centroid (farthest when `farthest`);
/// ties go to the lowest index.
int pool_anchor(const Matrix& positions, bool farthest = false);

// ---------------------------------------------------------------------------
// Pipeline configuration

struct LayerSpec {
  LayerType type = LayerType::encoder;
  /// Output representation. Ignored for `output` layers, which emit rho_out.
  std::optional<RepSpec> rep;
  std::vector<int> hidden{32};
  double radius = 0.3;
  double fraction = 1.0;
  bool refine = false;
  std::optional<MessageMode> mode;
  Aggregation aggregation = Aggregation::max;
  /// Dropout on the input of an output layer during training.
  double dropout = 0.0;
};

struct FrameConfig {
  FrameProvenance type = FrameProvenance::learned;
  double radius = 0.3;
  std::vector<int> hidden{32, 32};
  int envelope_p = 5;
};

struct PipelineConfig {
  RepSpec rho_in = RepSpec::parse("1x0n");
  RepSpec rho_out = RepSpec::parse("1x1n");
  MessageMode mode = MessageMode::tensorial;
  int radial_k = 16;
  bool norm = false;
  bool normalize_output = false;
  /// Pool towards the node farthest from the centroid instead of the closest.
  bool pool_anchor_farthest = false;
  FrameConfig frames;
  std::vector<int> refine_hidden{32};
  std::vector<LayerSpec> layers;

  static PipelineConfig from_json_string(const std::string& text);
  static PipelineConfig from_file(const std::string& path);
  std::string to_json_string() const;

  /// Throws PipelineConfigError naming the first layer that does not chain.
  void validate() const;
  /// Copy with every layer's mode and the frame type replaced.
  PipelineConfig with_mode(MessageMode m) const;
  PipelineConfig with_frames(FrameProvenance f) const;
  PipelineConfig with_refine(bool on) const;
};

class PipelineConfigError : public std::invalid_argument {
 public:
  PipelineConfigError(const std::string& what, int layer) : std::invalid_argument(what), layer_(layer) {}
  /// -1 for errors outside the layer list.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

/// Representations each layer reads and writes. `skip` is the cached encoder
/// representation a decoder concatenates.
struct LayerPlan {
  RepSpec in;
  RepSpec out;
  RepSpec skip;
};

/// Walks the layer list with a level stack; throws PipelineConfigError.
std::vector<LayerPlan> plan_layers(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Pipeline

struct ForwardOptions {
  bool training = false;
  /// Seeds random/constant frame sampling and degenerate Gram-Schmidt fallbacks.
  std::uint64_t frame_seed = 0;
  /// Replaces the configured frame construction when set.
  const FrameSet* frames_override = nullptr;
};

struct ForwardDiagnostics {
  double min_refine_det = 1.0;
  double max_refine_det = 1.0;
  int refinements = 0;
  int degenerate_frames = 0;
  int empty_neighbourhoods = 0;
  std::vector<int> level_sizes;
};

struct PipelineOutput {
  nn::Var global;      // rho_out(R^T) f, per output node
  nn::Var local;       // invariant output coordinates
  nn::Var frames;      // frames of the output nodes
  nn::Var input_frames;
  std::vector<int> nodes;  // cloud indices of the output rows
  ForwardDiagnostics diag;
};

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, std::uint64_t seed);

  const PipelineConfig& config() const { return cfg_; }
  PipelineOutput forward(nn::Tape& tape, const PointCloud& cloud, const ForwardOptions& opt = {});
  /// Evaluation-mode forward returning the global-frame output.
  FeatureBlock run(const PointCloud& cloud, const ForwardOptions& opt = {});

  /// Input frames as built by the configured method (evaluation mode).
  FrameSet frames_for(const PointCloud& cloud, const ForwardOptions& opt = {});

  std::vector<nn::Parameter*> parameters();
  /// Parameters followed by normalisation running statistics, for checkpoints.
  std::vector<std::pair<std::string, Matrix*>> state_tensors();
  std::size_t parameter_count();
  std::size_t frame_net_parameter_count();

  nn::Mlp& frame_net() { return frame_net_; }

 private:
  struct LayerParams {
    nn::Mlp phi;
    nn::Mlp psi;
    nn::Mlp refine;
    LayerPlan plan;
  };

  nn::Var build_frames(nn::Tape& tape, const PointCloud& cloud, const Matrix& inputs,
                       const ForwardOptions& opt, ForwardDiagnostics& diag);

  PipelineConfig cfg_;
  std::uint64_t seed_;
  nn::Mlp frame_net_;
  std::vector<LayerParams> layers_;
};

}  // namespace lframes
