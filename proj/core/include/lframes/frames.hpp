// Per-node local frames. A frame is an orthogonal matrix whose rows are the
// local basis vectors n_1..n_d, so R x maps global coordinates to local ones.
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lframes/geometry.hpp"
#include "lframes/nn.hpp"
#include "lframes/reps.hpp"

namespace lframes {

enum class FrameProvenance { learned, pca, random, constant, identity };

const char* to_string(FrameProvenance p);
FrameProvenance frame_provenance_from_string(const std::string& s);

/// N frames stored as rows of d*d entries (row-major d x d).
struct FrameSet {
  Matrix rows;
  FrameProvenance provenance = FrameProvenance::identity;
  int dim = 3;

  int size() const { return static_cast<int>(rows.rows()); }
  Orthogonal frame(int i) const;
  /// Largest |R R^T - I| over all frames.
  double max_orthogonality_error() const;
};

/// Smooth cutoff polynomial with value 1 at r = 0 and zero value and slope at
/// r = r_c; identically 0 for r >= r_c.
double envelope(double r, double r_c, int p = 5);

/// Relative threshold below which a Gram-Schmidt input counts as degenerate.
constexpr double kParallelEps = 1e-8;
/// The third axis is negated only when n3 . r_bar < -kHandednessTieEps |r_bar|;
/// smaller projections are roundoff (r_bar in the n1-n2 plane) and count as ties.
constexpr double kHandednessTieEps = 1e-10;

struct GramSchmidtResult {
  Eigen::Vector3d n1;
  Eigen::Vector3d n2;
  bool degenerate = false;
};

/// n1 = v1/|v1|, n2 = normalised rejection of v2 from n1. Degenerate inputs
/// are replaced by directions drawn from `rng`.
GramSchmidtResult gram_schmidt_pair(const Eigen::Vector3d& v1, const Eigen::Vector3d& v2, Rng& rng);

/// Rows (n1, n2, n3) with n3 = +-(n1 x n2) on the side of r_bar (ties keep +).
/// Throws std::invalid_argument unless n1, n2 are orthonormal within 1e-9.
Orthogonal complete_frame(const Eigen::Vector3d& n1, const Eigen::Vector3d& n2,
                          const Eigen::Vector3d& r_bar);

/// Settings shared by learned frame construction.
struct LearnedFrameOptions {
  double cutoff = 0.3;
  int envelope_p = 5;
  std::uint64_t seed = 0;  // fallback directions use split_rng(seed, node)
};

/// Even scalar channels of every feature block (blocks in name order), N x s.
Matrix even_scalar_inputs(const PointCloud& cloud);

/// Width of the per-edge input the frame network expects: 2 s + 1.
int frame_net_input_width(int scalar_channels);

struct FrameDiagnostics {
  int degenerate_nodes = 0;
  int flipped_nodes = 0;  // third axis negated by the handedness rule
};

/// v_k = sum_j w(|x_i - x_j|) phi(...)_k (x_i - x_j)/|x_i - x_j|. Returns the
/// pair (v1, v2), each N x 3.
std::pair<nn::Var, nn::Var> learned_frame_vectors(nn::Tape& tape, const Graph& graph,
                                                  const Matrix& node_scalars, nn::Mlp& phi,
                                                  const LearnedFrameOptions& opt, bool training);

/// Differentiable Gram-Schmidt completion to N x 9 frames. When `r_bar` is
/// non-null the third axis follows the handedness rule, otherwise n3 = n1 x n2.
nn::Var gram_schmidt_frames(nn::Tape& tape, nn::Var v1, nn::Var v2, const Matrix* r_bar,
                            std::uint64_t seed, FrameDiagnostics* diag = nullptr);

/// Envelope-weighted local centers of mass for every center of `graph`, N x 3.
Matrix local_centers_of_mass(const Graph& graph, double cutoff, int p);

/// Full learned-frame pipeline on the tape, N x 9.
nn::Var learned_frames(nn::Tape& tape, const Graph& graph, const Matrix& node_scalars,
                       nn::Mlp& phi, const LearnedFrameOptions& opt, bool training,
                       FrameDiagnostics* diag = nullptr);

FrameSet build_learned_frames(const PointCloud& cloud, const Graph& graph, nn::Mlp& phi,
                              const LearnedFrameOptions& opt);

/// Eigenvectors of sum_j (x_i - x_j)(x_i - x_j)^T in descending eigenvalue
/// order, each oriented so that sum_j e.(x_i - x_j) > 0.
FrameSet build_pca_frames(const PointCloud& cloud, const Graph& graph);
FrameSet build_pca_frames(const Matrix& positions, const Graph& graph);

FrameSet build_random_frames(int n, Rng& rng, Group group, int dim = 3);
FrameSet build_constant_frames(int n, const Orthogonal& shared);

struct RefineResult {
  nn::Var frames;
  nn::Var features;
  nn::Var updates;  // U per node, N x 9
};

/// U from six network outputs by Gram-Schmidt and a cross product (det +1);
/// frames become U R and features rho(U) f.
RefineResult refine_frames(nn::Tape& tape, nn::Var frames, nn::Var features, const RepSpec& spec,
                           nn::Mlp& refine_net, bool training, std::uint64_t seed);

/// Eager version on concrete data.
std::pair<FrameSet, FeatureBlock> refine_frames(const FrameSet& frames, const FeatureBlock& features,
                                                nn::Mlp& refine_net, std::uint64_t seed = 0);

struct FrameStability {
  double frobenius = 0.0;           // mean over nodes of |R_i - R~_i|_F
  std::vector<double> axis_cosine;  // per axis k, mean of row_k(R_i) . row_k(R~_i)
};

FrameStability frame_stability_metrics(const FrameSet& a, const FrameSet& b);

}  // namespace lframes
