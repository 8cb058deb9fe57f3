#include "lframes/mp.hpp"

#include <stdexcept>

namespace lframes {

const char* to_string(MessageMode m) { return m == MessageMode::scalar ? "scalar" : "tensorial"; }

const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::max: return "max";
    case Aggregation::sum: return "sum";
    case Aggregation::mean: return "mean";
  }
  return "max";
}

const char* to_string(LayerType t) {
  switch (t) {
    case LayerType::message: return "message";
    case LayerType::encoder: return "encoder";
    case LayerType::decoder: return "decoder";
    case LayerType::pool: return "pool";
    case LayerType::output: return "output";
  }
  return "encoder";
}

MessageMode message_mode_from_string(const std::string& s) {
  if (s == "scalar") return MessageMode::scalar;
  if (s == "tensorial") return MessageMode::tensorial;
  throw std::invalid_argument("unknown message mode '" + s + "'");
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "max") return Aggregation::max;
  if (s == "sum") return Aggregation::sum;
  if (s == "mean") return Aggregation::mean;
  throw std::invalid_argument("unknown aggregation '" + s + "'");
}

LayerType layer_type_from_string(const std::string& s) {
  if (s == "message") return LayerType::message;
  if (s == "encoder") return LayerType::encoder;
  if (s == "decoder") return LayerType::decoder;
  if (s == "pool") return LayerType::pool;
  if (s == "output") return LayerType::output;
  throw std::invalid_argument("unknown layer type '" + s + "'");
}

namespace {

FeatureBlock apply_frames(const FeatureBlock& features, const FrameSet& frames, const RepSpec& spec,
                          bool transpose) {
  if (features.values.cols() != spec.width())
    throw std::invalid_argument("feature width does not match representation " + spec.to_string());
  if (features.values.rows() != frames.size())
    throw std::invalid_argument("feature rows do not match frame count");
  nn::Tape tape;
  nn::Var out = nn::apply_rep(spec, tape.constant(frames.rows), tape.constant(features.values), transpose);
  return FeatureBlock(out.value(), spec);
}

nn::Var aggregate(nn::Var messages, const std::vector<int>& offsets, Aggregation a) {
  switch (a) {
    case Aggregation::sum: return nn::segment_sum(messages, offsets);
    case Aggregation::mean: return nn::segment_mean(messages, offsets);
    case Aggregation::max: break;
  }
  return nn::segment_max(messages, offsets);
}

}  // namespace

FeatureBlock canonicalize_in(const FeatureBlock& features, const FrameSet& frames, const RepSpec& rho_in) {
  return apply_frames(features, frames, rho_in, false);
}

FeatureBlock canonicalize_in(const PointCloud& cloud, const FrameSet& frames, const RepSpec& rho_in) {
  return canonicalize_in(FeatureBlock(cloud_input_features(cloud), rho_in), frames, rho_in);
}

FeatureBlock decanonicalize_out(const FeatureBlock& features, const FrameSet& frames, const RepSpec& rho_out) {
  return apply_frames(features, frames, rho_out, true);
}

Matrix cloud_input_features(const PointCloud& cloud) {
  if (cloud.features.empty()) return Matrix::Ones(cloud.size(), 1);
  int width = 0;
  for (const auto& [name, block] : cloud.features) width += static_cast<int>(block.values.cols());
  Matrix out(cloud.size(), width);
  int col = 0;
  for (const auto& [name, block] : cloud.features) {
    if (block.values.rows() != cloud.size())
      throw std::invalid_argument("feature block '" + name + "' has the wrong row count");
    out.middleCols(col, block.values.cols()) = block.values;
    col += static_cast<int>(block.values.cols());
  }
  return out;
}

int message_input_width(const RepSpec& in, const MessageOptions& opt, int edge_width) {
  return (opt.include_receiver ? 2 : 1) * in.width() + edge_width + opt.radial_k + 3;
}

nn::Var received_features(const Graph& graph, nn::Var center_frames, nn::Var source_frames,
                          nn::Var source_features, const RepSpec& spec, MessageMode mode) {
  nn::Var fj = nn::gather_rows(source_features, graph.sources);
  if (mode == MessageMode::scalar) return fj;
  nn::Var ri = nn::gather_rows(center_frames, graph.edge_centers());
  nn::Var rj = nn::gather_rows(source_frames, graph.sources);
  return nn::apply_rep(spec, nn::compose_frames(ri, rj, true, spec.dim()), fj);
}

nn::Var aggregate_messages(nn::Tape& tape, const Graph& graph, nn::Var center_frames,
                           nn::Var source_frames, nn::Var source_features, nn::Var center_features,
                           const RepSpec& spec, nn::Mlp& phi, const MessageOptions& opt, bool training,
                           const EdgeFeatures* edges) {
  const int e_count = graph.num_edges();
  const int edge_width = edges ? edges->spec.width() : 0;
  if (phi.in_width() != message_input_width(spec, opt, edge_width))
    throw std::invalid_argument("message network input width " + std::to_string(phi.in_width()) +
                                " does not match " +
                                std::to_string(message_input_width(spec, opt, edge_width)));
  if (source_features.cols() != spec.width())
    throw std::invalid_argument("source features do not match representation " + spec.to_string());
  if (e_count == 0) return tape.constant(Matrix::Zero(graph.num_centers(), phi.out_width()));

  const std::vector<int> centers = graph.edge_centers();
  nn::Var ri = nn::gather_rows(center_frames, centers);

  Matrix radial(e_count, opt.radial_k);
  Matrix dirs(e_count, 3);
  const double sign = opt.receiver_minus_sender ? -1.0 : 1.0;
  for (int e = 0; e < e_count; ++e) {
    radial.row(e) = gaussian_radial_embedding(graph.dist[e], opt.radial_k, opt.radial_max).transpose();
    const EdgeDirection u = unit_edge_direction(sign * graph.rel.row(e).transpose());
    dirs.row(e) = u.direction.transpose();
  }
  nn::Var angular = nn::apply_rep(RepSpec({{1, 1, Parity::tensor}}, 3), ri, tape.constant(std::move(dirs)));

  std::vector<nn::Var> parts;
  if (opt.include_receiver) parts.push_back(nn::gather_rows(center_features, centers));
  parts.push_back(received_features(graph, center_frames, source_frames, source_features, spec, opt.mode));
  if (edges) {
    if (edges->values.rows() != e_count) throw std::invalid_argument("edge features must have one row per edge");
    parts.push_back(nn::apply_rep(edges->spec, ri, edges->values));
  }
  parts.push_back(tape.constant(std::move(radial)));
  parts.push_back(angular);
  nn::Var messages = phi.forward(tape, nn::concat_cols(parts), training);
  return aggregate(messages, graph.offsets, opt.aggregation);
}

nn::Var message_layer(nn::Tape& tape, const Graph& graph, nn::Var frames, nn::Var features,
                      const RepSpec& spec, nn::Mlp& phi, nn::Mlp& psi, const MessageOptions& opt,
                      bool training, const EdgeFeatures* edges) {
  if (graph.num_centers() != features.rows())
    throw std::invalid_argument("message_layer: graph and feature node counts differ");
  nn::Var agg = aggregate_messages(tape, graph, frames, frames, features, features, spec, phi, opt, training, edges);
  return psi.forward(tape, nn::concat_cols({features, agg}), training);
}

}  // namespace lframes
