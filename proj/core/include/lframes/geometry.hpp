// Point clouds, radius graphs, farthest point sampling and edge embeddings.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lframes/reps.hpp"

namespace lframes {

struct PointCloud {
  Matrix positions;  // N x d
  std::map<std::string, FeatureBlock> features;
  std::optional<Matrix> normals;  // N x d, unit rows

  PointCloud() = default;
  explicit PointCloud(Matrix pos) : positions(std::move(pos)) {}

  int size() const { return static_cast<int>(positions.rows()); }
  int dim() const { return static_cast<int>(positions.cols()); }

  /// Throws std::invalid_argument when a block has the wrong row count or a
  /// normal is not unit length within 1e-9.
  void validate() const;

  /// x -> R x + t on positions and normals, rho(R) on every feature block.
  PointCloud transformed(const Orthogonal& rotation, const Eigen::VectorXd& translation) const;
};

/// Compressed neighbour lists. Edge e belongs to center i when
/// offsets[i] <= e < offsets[i+1]; sources[e] is the sending node j and
/// rel.row(e) caches x_j - x_i.
struct Graph {
  std::vector<int> offsets{0};
  std::vector<int> sources;
  Matrix rel;               // E x d
  std::vector<double> dist;  // E
  double cutoff = 0.0;

  int num_centers() const { return static_cast<int>(offsets.size()) - 1; }
  int num_edges() const { return static_cast<int>(sources.size()); }
  int degree(int i) const { return offsets[i + 1] - offsets[i]; }
  /// Center index of every edge, length E.
  std::vector<int> edge_centers() const;

  /// Builds a graph from explicit (center, source) pairs over one node set.
  /// Pairs are grouped by center and sorted by source.
  static Graph from_edges(const Matrix& positions, std::vector<std::pair<int, int>> edges);
};

/// Edges (i, j) with i != j and |x_j - x_i| < r_c; lists sorted by j.
Graph radius_graph(const PointCloud& cloud, double r_c);
Graph radius_graph(const Matrix& positions, double r_c);

/// Neighbourhoods of `centers` (row indices into `positions`) among all rows of
/// `positions` within r. The center itself is excluded. Edge sources index
/// `positions`.
Graph radius_graph_bipartite(const Matrix& positions, const std::vector<int>& centers, double r);

/// Greedy max-min selection starting from `start`; ties go to the lowest index.
std::vector<int> farthest_point_sampling(const Matrix& positions, int count, int start = 0);
std::vector<int> farthest_point_sampling(const PointCloud& cloud, int count, int start = 0);

/// Envelope-weighted sum of x_j - x_i over the neighbours of `node`.
Eigen::VectorXd local_center_of_mass(const Graph& graph, int node,
                                     const std::function<double(double)>& envelope);

/// k Gaussians with means spaced on [0, r_max] including both ends and widths
/// chosen so adjacent curves cross at 0.5.
Eigen::VectorXd gaussian_radial_embedding(double r, int k, double r_max);
double gaussian_embedding_sigma(int k, double r_max);

struct EdgeDirection {
  Eigen::VectorXd direction;
  bool degenerate = false;
};

EdgeDirection unit_edge_direction(const Eigen::VectorXd& edge);

// Text point-cloud format: one node per line "x y z [nx ny nz] [features...]",
// '#' starts a comment. The optional JSON sidecar <path>.json names the
// feature blocks (in column order) and their representation strings.
struct CloudFileHeader {
  int dim = 3;
  bool has_normals = false;
  std::vector<std::pair<std::string, std::string>> features;  // name, rep string
};

void write_point_cloud(const std::string& path, const PointCloud& cloud);
PointCloud read_point_cloud(const std::string& path);

}  // namespace lframes
