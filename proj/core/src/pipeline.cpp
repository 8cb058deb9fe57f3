#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "lframes/mp.hpp"

namespace lframes {

namespace {

struct Level {
  std::vector<int> nodes;  // cloud indices
  Matrix positions;
  nn::Var frames;
  nn::Var features;
};

std::vector<int> widths(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

Matrix select_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = m.row(rows[r]);
  return out;
}

// Edges from every `target` row to its k nearest `source` rows (fewer when the
// source set is small), with normalised inverse-distance weights.
Graph knn_graph(const Matrix& targets, const Matrix& sources, int k, Matrix& weights) {
  Graph g;
  const int nt = static_cast<int>(targets.rows());
  const int ns = static_cast<int>(sources.rows());
  const int kk = std::min(k, ns);
  g.rel.resize(static_cast<Eigen::Index>(nt) * kk, targets.cols());
  weights.resize(static_cast<Eigen::Index>(nt) * kk, 1);
  g.cutoff = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, int>> cand(ns);
  for (int i = 0; i < nt; ++i) {
    for (int j = 0; j < ns; ++j) cand[j] = {(sources.row(j) - targets.row(i)).squaredNorm(), j};
    std::partial_sort(cand.begin(), cand.begin() + kk, cand.end());
    std::sort(cand.begin(), cand.begin() + kk,
              [](const auto& a, const auto& b) { return a.second < b.second; });
    double total = 0.0;
    const int base = static_cast<int>(g.sources.size());
    for (int q = 0; q < kk; ++q) {
      const int j = cand[q].second;
      const double d = std::sqrt(cand[q].first);
      const int e = base + q;
      g.sources.push_back(j);
      g.rel.row(e) = sources.row(j) - targets.row(i);
      g.dist.push_back(d);
      weights(e, 0) = 1.0 / std::max(d, 1e-9);
      total += weights(e, 0);
    }
    for (int q = 0; q < kk; ++q) weights(base + q, 0) /= total;
    g.offsets.push_back(static_cast<int>(g.sources.size()));
  }
  return g;
}

// Star graph from one anchor to every other node.
Graph star_graph(const Matrix& positions, int anchor) {
  Graph g;
  const int n = static_cast<int>(positions.rows());
  g.rel.resize(std::max(n - 1, 0), positions.cols());
  g.cutoff = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    if (j == anchor) continue;
    const int e = static_cast<int>(g.sources.size());
    g.sources.push_back(j);
    g.rel.row(e) = positions.row(j) - positions.row(anchor);
    g.dist.push_back(g.rel.row(e).norm());
  }
  g.offsets.push_back(static_cast<int>(g.sources.size()));
  return g;
}

int count_empty(const Graph& g) {
  int empty = 0;
  for (int i = 0; i < g.num_centers(); ++i) empty += g.degree(i) == 0;
  return empty;
}

std::uint64_t refine_seed(std::uint64_t frame_seed, std::size_t layer) {
  return frame_seed ^ (0x9e3779b97f4a7c15ULL * (layer + 1));
}

}  // namespace

nn::Var interpolate_features(nn::Tape& tape, const Matrix& target_positions, nn::Var target_frames,
                             const Matrix& source_positions, nn::Var source_frames, nn::Var source_features,
                             const RepSpec& spec, MessageMode mode, int k) {
  Matrix w;
  const Graph g = knn_graph(target_positions, source_positions, k, w);
  nn::Var recv = received_features(g, target_frames, source_frames, source_features, spec, mode);
  return nn::segment_sum(nn::mul_col(recv, tape.constant(std::move(w))), g.offsets);
}

int pool_anchor(const Matrix& positions, bool farthest) {
  const int n = static_cast<int>(positions.rows());
  if (n == 0) throw std::invalid_argument("cannot pool an empty level");
  const Eigen::RowVectorXd centroid = positions.colwise().mean();
  int anchor = 0;
  double best = (positions.row(0) - centroid).squaredNorm();
  for (int j = 1; j < n; ++j) {
    const double d = (positions.row(j) - centroid).squaredNorm();
    if (farthest ? d > best : d < best) {
      best = d;
      anchor = j;
    }
  }
  return anchor;
}

Pipeline::Pipeline(PipelineConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
  const std::vector<LayerPlan> plans = plan_layers(cfg_);
  Rng rng = split_rng(seed, 0);
  const int s = static_cast<int>(cfg_.rho_in.even_scalar_channels().size());
  frame_net_ = nn::Mlp("frame_net", widths(frame_net_input_width(s), cfg_.frames.hidden, 2), rng, cfg_.norm);
  for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
    const LayerSpec& l = cfg_.layers[i];
    const LayerPlan& p = plans[i];
    const std::string name = "layer" + std::to_string(i);
    const int w_in = p.in.width();
    const int w_out = p.out.width();
    LayerParams lp;
    lp.plan = p;
    MessageOptions mo;
    mo.radial_k = cfg_.radial_k;
    switch (l.type) {
      case LayerType::message:
        lp.phi = nn::Mlp(name + ".phi", widths(message_input_width(p.in, mo), l.hidden, w_out), rng, cfg_.norm);
        lp.psi = nn::Mlp(name + ".psi", widths(w_in + w_out, l.hidden, w_out), rng, cfg_.norm);
        break;
      case LayerType::encoder:
        mo.include_receiver = false;
        lp.phi = nn::Mlp(name + ".phi", widths(message_input_width(p.in, mo), l.hidden, w_out), rng, cfg_.norm);
        lp.psi = nn::Mlp(name + ".psi", widths(w_in + w_out, l.hidden, w_out), rng, cfg_.norm);
        break;
      case LayerType::pool:
        mo.include_receiver = false;
        lp.phi = nn::Mlp(name + ".phi", widths(message_input_width(p.in, mo), l.hidden, w_out), rng, cfg_.norm);
        break;
      case LayerType::decoder:
        lp.psi = nn::Mlp(name + ".psi", widths(w_in + p.skip.width(), l.hidden, w_out), rng, cfg_.norm);
        break;
      case LayerType::output:
        lp.psi = nn::Mlp(name + ".out", widths(w_in, l.hidden, w_out), rng, false);
        break;
    }
    if (l.refine) lp.refine = nn::Mlp(name + ".refine", widths(w_out, cfg_.refine_hidden, 6), rng, cfg_.norm);
    layers_.push_back(std::move(lp));
  }
}

nn::Var Pipeline::build_frames(nn::Tape& tape, const PointCloud& cloud, const Matrix& inputs,
                               const ForwardOptions& opt, ForwardDiagnostics& diag) {
  const int n = cloud.size();
  if (opt.frames_override) {
    if (opt.frames_override->size() != n) throw std::invalid_argument("frame override has the wrong node count");
    return tape.constant(opt.frames_override->rows);
  }
  switch (cfg_.frames.type) {
    case FrameProvenance::learned: {
      const Graph g = radius_graph(cloud.positions, cfg_.frames.radius);
      Matrix scalars(n, 0);
      const std::vector<int> channels = cfg_.rho_in.even_scalar_channels();
      scalars.resize(n, static_cast<Eigen::Index>(channels.size()));
      for (std::size_t c = 0; c < channels.size(); ++c) scalars.col(c) = inputs.col(channels[c]);
      LearnedFrameOptions lo;
      lo.cutoff = cfg_.frames.radius;
      lo.envelope_p = cfg_.frames.envelope_p;
      lo.seed = opt.frame_seed;
      FrameDiagnostics fd;
      nn::Var f = learned_frames(tape, g, scalars, frame_net_, lo, opt.training, &fd);
      diag.degenerate_frames += fd.degenerate_nodes;
      return f;
    }
    case FrameProvenance::pca:
      return tape.constant(build_pca_frames(cloud.positions, radius_graph(cloud.positions, cfg_.frames.radius)).rows);
    case FrameProvenance::random: {
      Rng rng = split_rng(opt.frame_seed, 1);
      return tape.constant(build_random_frames(n, rng, Group::O).rows);
    }
    case FrameProvenance::constant: {
      Rng rng = split_rng(opt.frame_seed, 2);
      return tape.constant(build_constant_frames(n, random_orthogonal(rng, Group::O)).rows);
    }
    case FrameProvenance::identity:
      return tape.constant(build_constant_frames(n, Orthogonal::identity(3)).rows);
  }
  throw std::logic_error("unhandled frame type");
}

PipelineOutput Pipeline::forward(nn::Tape& tape, const PointCloud& cloud, const ForwardOptions& opt) {
  if (cloud.dim() != 3) throw std::invalid_argument("pipeline expects 3D point clouds");
  const Matrix inputs = cloud_input_features(cloud);
  if (inputs.cols() != cfg_.rho_in.width())
    throw std::invalid_argument("cloud features have width " + std::to_string(inputs.cols()) + " but rho_in " +
                                cfg_.rho_in.to_string() + " needs " + std::to_string(cfg_.rho_in.width()));
  PipelineOutput out;
  ForwardDiagnostics& diag = out.diag;
  diag.min_refine_det = std::numeric_limits<double>::infinity();
  diag.max_refine_det = -std::numeric_limits<double>::infinity();

  nn::Var frames0 = build_frames(tape, cloud, inputs, opt, diag);
  out.input_frames = frames0;
  std::vector<Level> stack;
  {
    Level l0;
    l0.nodes.resize(cloud.size());
    for (int i = 0; i < cloud.size(); ++i) l0.nodes[i] = i;
    l0.positions = cloud.positions;
    l0.frames = frames0;
    l0.features = nn::apply_rep(cfg_.rho_in, frames0, tape.constant(inputs));
    stack.push_back(std::move(l0));
  }
  diag.level_sizes.push_back(cloud.size());

  const bool training = opt.training;
  for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
    const LayerSpec& spec = cfg_.layers[i];
    LayerParams& lp = layers_[i];
    MessageOptions mo;
    mo.mode = spec.mode.value_or(cfg_.mode);
    mo.aggregation = spec.aggregation;
    mo.radial_k = cfg_.radial_k;
    mo.radial_max = spec.radius;
    Level& top = stack.back();
    switch (spec.type) {
      case LayerType::message: {
        const Graph g = radius_graph(top.positions, spec.radius);
        diag.empty_neighbourhoods += count_empty(g);
        top.features = message_layer(tape, g, top.frames, top.features, lp.plan.in, lp.phi, lp.psi, mo, training);
        break;
      }
      case LayerType::encoder: {
        const int n = static_cast<int>(top.positions.rows());
        const int count = std::clamp(static_cast<int>(std::lround(spec.fraction * n)), 1, n);
        const std::vector<int> centers = farthest_point_sampling(top.positions, count);
        const Graph g = radius_graph_bipartite(top.positions, centers, spec.radius);
        diag.empty_neighbourhoods += count_empty(g);
        mo.include_receiver = false;
        mo.receiver_minus_sender = false;
        nn::Var cf = nn::gather_rows(top.frames, centers);
        nn::Var cx = nn::gather_rows(top.features, centers);
        nn::Var agg = aggregate_messages(tape, g, cf, top.frames, top.features, cx, lp.plan.in, lp.phi, mo, training);
        Level next;
        for (int c : centers) next.nodes.push_back(top.nodes[c]);
        next.positions = select_rows(top.positions, centers);
        next.frames = cf;
        next.features = lp.psi.forward(tape, nn::concat_cols({cx, agg}), training);
        stack.push_back(std::move(next));
        diag.level_sizes.push_back(count);
        break;
      }
      case LayerType::decoder: {
        Level src = std::move(stack.back());
        stack.pop_back();
        Level& tgt = stack.back();
        nn::Var h = interpolate_features(tape, tgt.positions, tgt.frames, src.positions, src.frames, src.features,
                                         lp.plan.in, mo.mode);
        tgt.features = lp.psi.forward(tape, nn::concat_cols({h, tgt.features}), training);
        break;
      }
      case LayerType::pool: {
        const int anchor = pool_anchor(top.positions, cfg_.pool_anchor_farthest);
        const Graph g = star_graph(top.positions, anchor);
        mo.include_receiver = false;
        mo.receiver_minus_sender = false;
        nn::Var af = nn::gather_rows(top.frames, {anchor});
        nn::Var ax = nn::gather_rows(top.features, {anchor});
        Level pooled;
        pooled.nodes = {top.nodes[anchor]};
        pooled.positions = top.positions.row(anchor);
        pooled.frames = af;
        pooled.features = aggregate_messages(tape, g, af, top.frames, top.features, ax, lp.plan.in, lp.phi, mo, training);
        stack.assign(1, std::move(pooled));
        diag.level_sizes.push_back(1);
        break;
      }
      case LayerType::output: {
        nn::Var x = top.features;
        if (training && spec.dropout > 0) {
          Rng rng = split_rng(opt.frame_seed, 3 + i);
          std::bernoulli_distribution keep(1.0 - spec.dropout);
          Matrix mask(x.rows(), x.cols());
          for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = keep(rng) ? 1.0 / (1.0 - spec.dropout) : 0.0;
          x = nn::mul(x, tape.constant(std::move(mask)));
        }
        top.features = lp.psi.forward(tape, x, training);
        break;
      }
    }
    if (spec.refine) {
      Level& cur = stack.back();
      RefineResult r = refine_frames(tape, cur.frames, cur.features, lp.plan.out, lp.refine, training,
                                     refine_seed(opt.frame_seed, i));
      for (Eigen::Index row = 0; row < r.updates.rows(); ++row) {
        const double det = kernels::det_small(r.updates.value().row(row).data(), 3);
        diag.min_refine_det = std::min(diag.min_refine_det, det);
        diag.max_refine_det = std::max(diag.max_refine_det, det);
      }
      ++diag.refinements;
      cur.frames = r.frames;
      cur.features = r.features;
    }
  }
  if (diag.refinements == 0) diag.min_refine_det = diag.max_refine_det = 1.0;

  Level& last = stack.back();
  out.local = last.features;
  out.frames = last.frames;
  out.nodes = last.nodes;
  out.global = nn::apply_rep(cfg_.rho_out, last.frames, last.features, true);
  if (cfg_.normalize_output) out.global = nn::mul_col(out.global, nn::reciprocal(nn::add_scalar(nn::row_norm(out.global), 1e-12)));
  return out;
}

FeatureBlock Pipeline::run(const PointCloud& cloud, const ForwardOptions& opt) {
  ForwardOptions o = opt;
  o.training = false;
  nn::Tape tape;
  PipelineOutput out = forward(tape, cloud, o);
  return FeatureBlock(out.global.value(), cfg_.rho_out);
}

FrameSet Pipeline::frames_for(const PointCloud& cloud, const ForwardOptions& opt) {
  ForwardOptions o = opt;
  o.training = false;
  nn::Tape tape;
  ForwardDiagnostics diag;
  nn::Var f = build_frames(tape, cloud, cloud_input_features(cloud), o, diag);
  return FrameSet{f.value(), opt.frames_override ? opt.frames_override->provenance : cfg_.frames.type, 3};
}

std::vector<nn::Parameter*> Pipeline::parameters() {
  std::vector<nn::Parameter*> out;
  auto add = [&](nn::Mlp& m) {
    if (m.widths().empty()) return;
    for (auto* p : m.parameters()) out.push_back(p);
  };
  if (cfg_.frames.type == FrameProvenance::learned) add(frame_net_);
  for (auto& l : layers_) {
    add(l.phi);
    add(l.psi);
    add(l.refine);
  }
  return out;
}

std::vector<std::pair<std::string, Matrix*>> Pipeline::state_tensors() {
  std::vector<std::pair<std::string, Matrix*>> out;
  for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
  auto add = [&](nn::Mlp& m, const std::string& name) {
    if (m.widths().empty()) return;
    int k = 0;
    for (Matrix* b : m.buffers()) out.emplace_back(name + ".buffer" + std::to_string(k++), b);
  };
  if (cfg_.frames.type == FrameProvenance::learned) add(frame_net_, "frame_net");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string name = "layer" + std::to_string(i);
    add(layers_[i].phi, name + ".phi");
    add(layers_[i].psi, name + ".psi");
    add(layers_[i].refine, name + ".refine");
  }
  return out;
}

std::size_t Pipeline::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

std::size_t Pipeline::frame_net_parameter_count() {
  return cfg_.frames.type == FrameProvenance::learned ? frame_net_.total_parameter_count() : 0;
}

}  // namespace lframes
