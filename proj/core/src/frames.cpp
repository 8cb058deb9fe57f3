#include "lframes/frames.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace lframes {

const char* to_string(FrameProvenance p) {
  switch (p) {
    case FrameProvenance::learned: return "learned";
    case FrameProvenance::pca: return "pca";
    case FrameProvenance::random: return "random";
    case FrameProvenance::constant: return "constant";
    case FrameProvenance::identity: return "identity";
  }
  return "unknown";
}

FrameProvenance frame_provenance_from_string(const std::string& s) {
  if (s == "learned") return FrameProvenance::learned;
  if (s == "pca") return FrameProvenance::pca;
  if (s == "random") return FrameProvenance::random;
  if (s == "constant") return FrameProvenance::constant;
  if (s == "identity") return FrameProvenance::identity;
  throw std::invalid_argument("unknown frame type '" + s + "'");
}

Orthogonal FrameSet::frame(int i) const {
  Eigen::MatrixXd m(dim, dim);
  for (int p = 0; p < dim; ++p)
    for (int q = 0; q < dim; ++q) m(p, q) = rows(i, p * dim + q);
  return Orthogonal(std::move(m));
}

double FrameSet::max_orthogonality_error() const {
  double worst = 0.0;
  for (int i = 0; i < size(); ++i) worst = std::max(worst, frame(i).orthogonality_error());
  return worst;
}

double envelope(double r, double r_c, int p) {
  if (r >= r_c) return 0.0;
  const double x = r / r_c;
  const double xp = std::pow(x, p);
  const double a = (p + 1.0) * (p + 2.0) / 2.0;
  const double b = p * (p + 2.0);
  const double c = p * (p + 1.0) / 2.0;
  return 1.0 - a * xp + b * xp * x - c * xp * x * x;
}

namespace {

Eigen::Vector3d random_direction(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

double degeneracy_threshold(const Eigen::Vector3d& v1, const Eigen::Vector3d& v2) {
  return kParallelEps * std::max({v1.norm(), v2.norm(), 1.0});
}

// Effective (v1, v2) after replacing degenerate inputs.
struct GsInputs {
  Eigen::Vector3d v1, v2;
  bool replaced1 = false, replaced2 = false;
};

GsInputs resolve_degeneracy(const Eigen::Vector3d& v1, const Eigen::Vector3d& v2, Rng& rng) {
  GsInputs in{v1, v2};
  const double eps = degeneracy_threshold(v1, v2);
  if (in.v1.norm() < eps) {
    in.v1 = random_direction(rng);
    in.replaced1 = true;
  }
  const Eigen::Vector3d n1 = in.v1.normalized();
  auto rejection = [&](const Eigen::Vector3d& v) { return (v - n1.dot(v) * n1).norm(); };
  while (rejection(in.v2) < eps) {
    in.v2 = random_direction(rng);
    in.replaced2 = true;
  }
  return in;
}

}  // namespace

GramSchmidtResult gram_schmidt_pair(const Eigen::Vector3d& v1, const Eigen::Vector3d& v2, Rng& rng) {
  const GsInputs in = resolve_degeneracy(v1, v2, rng);
  GramSchmidtResult r;
  r.n1 = in.v1.normalized();
  r.n2 = (in.v2 - r.n1.dot(in.v2) * r.n1).normalized();
  r.degenerate = in.replaced1 || in.replaced2;
  return r;
}

Orthogonal complete_frame(const Eigen::Vector3d& n1, const Eigen::Vector3d& n2,
                          const Eigen::Vector3d& r_bar) {
  constexpr double tol = 1e-9;
  if (std::abs(n1.norm() - 1.0) > tol || std::abs(n2.norm() - 1.0) > tol || std::abs(n1.dot(n2)) > tol)
    throw std::invalid_argument("complete_frame: n1 and n2 must be orthonormal");
  Eigen::Vector3d n3 = n1.cross(n2);
  if (n3.dot(r_bar) < -kHandednessTieEps * r_bar.norm()) n3 = -n3;
  Eigen::MatrixXd m(3, 3);
  m.row(0) = n1.transpose();
  m.row(1) = n2.transpose();
  m.row(2) = n3.transpose();
  return Orthogonal(std::move(m));
}

Matrix even_scalar_inputs(const PointCloud& cloud) {
  int s = 0;
  for (const auto& [name, block] : cloud.features)
    s += static_cast<int>(block.spec.even_scalar_channels().size());
  Matrix out(cloud.size(), s);
  int col = 0;
  for (const auto& [name, block] : cloud.features)
    for (int c : block.spec.even_scalar_channels()) out.col(col++) = block.values.col(c);
  return out;
}

int frame_net_input_width(int scalar_channels) { return 2 * scalar_channels + 1; }

std::pair<nn::Var, nn::Var> learned_frame_vectors(nn::Tape& tape, const Graph& graph,
                                                  const Matrix& node_scalars, nn::Mlp& phi,
                                                  const LearnedFrameOptions& opt, bool training) {
  const int e_count = graph.num_edges();
  const auto s = node_scalars.cols();
  if (node_scalars.rows() != graph.num_centers())
    throw std::invalid_argument("learned_frame_vectors: scalar rows must match node count");
  const std::vector<int> centers = graph.edge_centers();
  Matrix inputs(e_count, 2 * s + 1);
  Matrix weighted_dirs(e_count, 3);
  Matrix omega(e_count, 1);
  for (int e = 0; e < e_count; ++e) {
    inputs.block(e, 0, 1, s) = node_scalars.row(centers[e]);
    inputs.block(e, s, 1, s) = node_scalars.row(graph.sources[e]);
    inputs(e, 2 * s) = graph.dist[e];
    omega(e, 0) = envelope(graph.dist[e], opt.cutoff, opt.envelope_p);
    // graph.rel holds x_j - x_i; the frame vectors sum x_i - x_j.
    weighted_dirs.row(e) = -graph.rel.row(e) / graph.dist[e];
  }
  nn::Var dirs = tape.constant(std::move(weighted_dirs));
  nn::Var w;
  if (e_count > 0) {
    nn::Var out = phi.forward(tape, tape.constant(std::move(inputs)), training);
    w = nn::mul_col(out, tape.constant(std::move(omega)));
  } else {
    w = tape.constant(Matrix::Zero(0, 2));
  }
  nn::Var v1 = nn::segment_sum(nn::mul_col(dirs, nn::slice_cols(w, 0, 1)), graph.offsets);
  nn::Var v2 = nn::segment_sum(nn::mul_col(dirs, nn::slice_cols(w, 1, 1)), graph.offsets);
  return {v1, v2};
}

nn::Var gram_schmidt_frames(nn::Tape& tape, nn::Var v1, nn::Var v2, const Matrix* r_bar,
                            std::uint64_t seed, FrameDiagnostics* diag) {
  const Eigen::Index n = v1.rows();
  if (v1.cols() != 3 || v2.cols() != 3 || v2.rows() != n)
    throw std::invalid_argument("gram_schmidt_frames: inputs must be N x 3");
  std::vector<char> mask1(n, 0), mask2(n, 0);
  Matrix rep1 = Matrix::Zero(n, 3), rep2 = Matrix::Zero(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d a = v1.value().row(i).transpose();
    const Eigen::Vector3d b = v2.value().row(i).transpose();
    Rng rng = split_rng(seed, static_cast<std::uint64_t>(i));
    const GsInputs in = resolve_degeneracy(a, b, rng);
    if (in.replaced1) {
      mask1[i] = 1;
      rep1.row(i) = in.v1.transpose();
    }
    if (in.replaced2) {
      mask2[i] = 1;
      rep2.row(i) = in.v2.transpose();
    }
    if (diag && (in.replaced1 || in.replaced2)) ++diag->degenerate_nodes;
  }
  nn::Var a = nn::replace_rows(v1, mask1, rep1);
  nn::Var b = nn::replace_rows(v2, mask2, rep2);
  nn::Var n1 = nn::mul_col(a, nn::reciprocal(nn::row_norm(a)));
  nn::Var rej = nn::sub(b, nn::mul_col(n1, nn::row_dot(n1, b)));
  nn::Var n2 = nn::mul_col(rej, nn::reciprocal(nn::row_norm(rej)));
  nn::Var n3 = nn::cross_rows(n1, n2);
  if (r_bar) {
    if (r_bar->rows() != n || r_bar->cols() != 3)
      throw std::invalid_argument("gram_schmidt_frames: r_bar must be N x 3");
    Matrix sign(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      // The sign decision is piecewise constant: no gradient flows through it.
      sign(i, 0) = n3.value().row(i).dot(r_bar->row(i)) < -kHandednessTieEps * r_bar->row(i).norm() ? -1.0 : 1.0;
      if (diag && sign(i, 0) < 0) ++diag->flipped_nodes;
    }
    n3 = nn::mul_col(n3, tape.constant(std::move(sign)));
  }
  return nn::concat_cols({n1, n2, n3});
}

Matrix local_centers_of_mass(const Graph& graph, double cutoff, int p) {
  Matrix out = Matrix::Zero(graph.num_centers(), graph.rel.cols());
  for (int i = 0; i < graph.num_centers(); ++i)
    for (int e = graph.offsets[i]; e < graph.offsets[i + 1]; ++e)
      out.row(i) += envelope(graph.dist[e], cutoff, p) * graph.rel.row(e);
  return out;
}

nn::Var learned_frames(nn::Tape& tape, const Graph& graph, const Matrix& node_scalars,
                       nn::Mlp& phi, const LearnedFrameOptions& opt, bool training,
                       FrameDiagnostics* diag) {
  auto [v1, v2] = learned_frame_vectors(tape, graph, node_scalars, phi, opt, training);
  const Matrix r_bar = local_centers_of_mass(graph, opt.cutoff, opt.envelope_p);
  return gram_schmidt_frames(tape, v1, v2, &r_bar, opt.seed, diag);
}

FrameSet build_learned_frames(const PointCloud& cloud, const Graph& graph, nn::Mlp& phi,
                              const LearnedFrameOptions& opt) {
  nn::Tape tape;
  nn::Var f = learned_frames(tape, graph, even_scalar_inputs(cloud), phi, opt, false);
  return FrameSet{f.value(), FrameProvenance::learned, 3};
}

FrameSet build_pca_frames(const Matrix& positions, const Graph& graph) {
  const int n = graph.num_centers();
  const auto d = positions.cols();
  FrameSet fs;
  fs.dim = static_cast<int>(d);
  fs.provenance = FrameProvenance::pca;
  fs.rows.resize(n, d * d);
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(d);
    double scale = 0.0;
    for (int e = graph.offsets[i]; e < graph.offsets[i + 1]; ++e) {
      const Eigen::VectorXd u = -graph.rel.row(e).transpose();  // x_i - x_j
      cov += u * u.transpose();
      total += u;
      scale += u.norm();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::MatrixXd vecs = es.eigenvectors();  // ascending eigenvalues
    for (Eigen::Index k = 0; k < d; ++k) {
      Eigen::VectorXd ek = vecs.col(d - 1 - k);
      const double s = ek.dot(total);
      bool flip = false;
      if (std::abs(s) > 1e-12 * std::max(scale, 1e-300)) {
        flip = s < 0;
      } else {
        for (Eigen::Index c = 0; c < d; ++c)
          if (std::abs(ek[c]) > 1e-12) {
            flip = ek[c] < 0;
            break;
          }
      }
      if (flip) ek = -ek;
      for (Eigen::Index c = 0; c < d; ++c) fs.rows(i, k * d + c) = ek[c];
    }
  }
  return fs;
}

FrameSet build_pca_frames(const PointCloud& cloud, const Graph& graph) {
  return build_pca_frames(cloud.positions, graph);
}

FrameSet build_random_frames(int n, Rng& rng, Group group, int dim) {
  FrameSet fs;
  fs.dim = dim;
  fs.provenance = FrameProvenance::random;
  fs.rows.resize(n, dim * dim);
  for (int i = 0; i < n; ++i) {
    const Orthogonal r = random_orthogonal(rng, group, dim);
    for (int p = 0; p < dim; ++p)
      for (int q = 0; q < dim; ++q) fs.rows(i, p * dim + q) = r.matrix()(p, q);
  }
  return fs;
}

FrameSet build_constant_frames(int n, const Orthogonal& shared) {
  const int d = shared.dim();
  FrameSet fs;
  fs.dim = d;
  fs.provenance = shared.matrix().isIdentity(0.0) ? FrameProvenance::identity : FrameProvenance::constant;
  fs.rows.resize(n, d * d);
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q) fs.rows(i, p * d + q) = shared.matrix()(p, q);
  return fs;
}

RefineResult refine_frames(nn::Tape& tape, nn::Var frames, nn::Var features, const RepSpec& spec,
                           nn::Mlp& refine_net, bool training, std::uint64_t seed) {
  if (refine_net.out_width() != 6) throw std::invalid_argument("refine_frames: network must output 6 numbers");
  nn::Var out = refine_net.forward(tape, features, training);
  nn::Var u = gram_schmidt_frames(tape, nn::slice_cols(out, 0, 3), nn::slice_cols(out, 3, 3), nullptr, seed);
  RefineResult r;
  r.updates = u;
  r.frames = nn::compose_frames(u, frames, false, 3);
  r.features = nn::apply_rep(spec, u, features);
  return r;
}

std::pair<FrameSet, FeatureBlock> refine_frames(const FrameSet& frames, const FeatureBlock& features,
                                                nn::Mlp& refine_net, std::uint64_t seed) {
  nn::Tape tape;
  RefineResult r = refine_frames(tape, tape.constant(frames.rows), tape.constant(features.values),
                                 features.spec, refine_net, false, seed);
  FrameSet fs{r.frames.value(), frames.provenance, frames.dim};
  return {std::move(fs), FeatureBlock(r.features.value(), features.spec)};
}

FrameStability frame_stability_metrics(const FrameSet& a, const FrameSet& b) {
  if (a.size() != b.size() || a.dim != b.dim)
    throw std::invalid_argument("frame_stability_metrics: frame sets differ in size");
  const int d = a.dim;
  FrameStability s;
  s.axis_cosine.assign(d, 0.0);
  if (a.size() == 0) return s;
  for (int i = 0; i < a.size(); ++i) {
    s.frobenius += (a.rows.row(i) - b.rows.row(i)).norm();
    for (int k = 0; k < d; ++k)
      s.axis_cosine[k] += a.rows.row(i).segment(k * d, d).dot(b.rows.row(i).segment(k * d, d));
  }
  s.frobenius /= a.size();
  for (auto& c : s.axis_cosine) c /= a.size();
  return s;
}

}  // namespace lframes
