#include "lframes/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lframes {

void PointCloud::validate() const {
  const auto n = positions.rows();
  for (const auto& [name, block] : features) {
    if (block.values.rows() != n)
      throw std::invalid_argument("PointCloud: feature block '" + name + "' has wrong row count");
    if (block.values.cols() != block.spec.width())
      throw std::invalid_argument("PointCloud: feature block '" + name + "' has wrong width");
  }
  if (normals) {
    if (normals->rows() != n || normals->cols() != positions.cols())
      throw std::invalid_argument("PointCloud: normals have wrong shape");
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(normals->row(i).norm() - 1.0) > 1e-9)
        throw std::invalid_argument("PointCloud: normal " + std::to_string(i) + " is not unit");
  }
}

PointCloud PointCloud::transformed(const Orthogonal& rotation,
                                   const Eigen::VectorXd& translation) const {
  PointCloud out;
  const Eigen::MatrixXd& r = rotation.matrix();
  out.positions = positions * r.transpose();
  out.positions.rowwise() += translation.transpose();
  if (normals) out.normals = Matrix((*normals) * r.transpose());
  for (const auto& [name, block] : features)
    out.features.emplace(name, apply_rep(block.spec, rotation, block));
  return out;
}

std::vector<int> Graph::edge_centers() const {
  std::vector<int> c(sources.size());
  for (int i = 0; i < num_centers(); ++i)
    for (int e = offsets[i]; e < offsets[i + 1]; ++e) c[e] = i;
  return c;
}

namespace {

Graph finish_graph(const Matrix& positions, const std::vector<int>& center_rows,
                   const std::vector<std::vector<int>>& lists, double cutoff) {
  Graph g;
  g.cutoff = cutoff;
  g.offsets.assign(1, 0);
  for (const auto& l : lists) {
    g.offsets.push_back(g.offsets.back() + static_cast<int>(l.size()));
    g.sources.insert(g.sources.end(), l.begin(), l.end());
  }
  const auto e_count = static_cast<Eigen::Index>(g.sources.size());
  g.rel.resize(e_count, positions.cols());
  g.dist.resize(g.sources.size());
  for (std::size_t c = 0; c < lists.size(); ++c) {
    const int i = center_rows[c];
    for (int e = g.offsets[c]; e < g.offsets[c + 1]; ++e) {
      g.rel.row(e) = positions.row(g.sources[e]) - positions.row(i);
      g.dist[e] = g.rel.row(e).norm();
    }
  }
  return g;
}

}  // namespace

Graph Graph::from_edges(const Matrix& positions, std::vector<std::pair<int, int>> edges) {
  const int n = static_cast<int>(positions.rows());
  std::vector<std::vector<int>> lists(n);
  for (auto [i, j] : edges) {
    if (i < 0 || i >= n || j < 0 || j >= n)
      throw std::invalid_argument("Graph::from_edges: node index out of range");
    lists[i].push_back(j);
  }
  for (auto& l : lists) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return finish_graph(positions, rows, lists, std::numeric_limits<double>::infinity());
}

Graph radius_graph(const Matrix& positions, double r_c) {
  if (!(r_c > 0)) throw std::invalid_argument("radius_graph: cutoff must be positive");
  const int n = static_cast<int>(positions.rows());
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return radius_graph_bipartite(positions, rows, r_c);
}

Graph radius_graph(const PointCloud& cloud, double r_c) { return radius_graph(cloud.positions, r_c); }

Graph radius_graph_bipartite(const Matrix& positions, const std::vector<int>& centers, double r) {
  if (!(r > 0)) throw std::invalid_argument("radius_graph: cutoff must be positive");
  const int n = static_cast<int>(positions.rows());
  const double r2 = r * r;
  std::vector<std::vector<int>> lists(centers.size());
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const int i = centers[c];
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d2 = (positions.row(j) - positions.row(i)).squaredNorm();
      if (d2 > r2 * (1 + 1e-12)) continue;
      // Coincident points carry no direction and are left out.
      const double d = std::sqrt(d2);
      if (d > 0.0 && d < r) lists[c].push_back(j);
    }
  }
  return finish_graph(positions, centers, lists, r);
}

std::vector<int> farthest_point_sampling(const Matrix& positions, int count, int start) {
  const int n = static_cast<int>(positions.rows());
  if (count < 1 || count > n)
    throw std::invalid_argument("farthest_point_sampling: count out of range");
  if (start < 0 || start >= n) throw std::invalid_argument("farthest_point_sampling: bad start");
  std::vector<int> picked{start};
  picked.reserve(count);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[start] = 1;
  int last = start;
  while (static_cast<int>(picked.size()) < count) {
    int best = -1;
    double best_d = -1.0;
    for (int j = 0; j < n; ++j) {
      if (taken[j]) continue;
      const double d2 = (positions.row(j) - positions.row(last)).squaredNorm();
      min_d2[j] = std::min(min_d2[j], d2);
      if (min_d2[j] > best_d) {
        best_d = min_d2[j];
        best = j;
      }
    }
    taken[best] = 1;
    picked.push_back(best);
    last = best;
  }
  return picked;
}

std::vector<int> farthest_point_sampling(const PointCloud& cloud, int count, int start) {
  return farthest_point_sampling(cloud.positions, count, start);
}

Eigen::VectorXd local_center_of_mass(const Graph& graph, int node,
                                     const std::function<double(double)>& envelope) {
  if (node < 0 || node >= graph.num_centers())
    throw std::invalid_argument("local_center_of_mass: node out of range");
  Eigen::VectorXd r = Eigen::VectorXd::Zero(graph.rel.cols());
  for (int e = graph.offsets[node]; e < graph.offsets[node + 1]; ++e)
    r += envelope(graph.dist[e]) * graph.rel.row(e).transpose();
  return r;
}

double gaussian_embedding_sigma(int k, double r_max) {
  if (k < 2) throw std::invalid_argument("gaussian_radial_embedding: need k >= 2");
  const double spacing = r_max / (k - 1);
  return spacing / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

Eigen::VectorXd gaussian_radial_embedding(double r, int k, double r_max) {
  const double sigma = gaussian_embedding_sigma(k, r_max);
  const double spacing = r_max / (k - 1);
  Eigen::VectorXd out(k);
  for (int m = 0; m < k; ++m) {
    const double diff = r - m * spacing;
    out[m] = std::exp(-diff * diff / (2.0 * sigma * sigma));
  }
  return out;
}

EdgeDirection unit_edge_direction(const Eigen::VectorXd& edge) {
  const double n = edge.norm();
  if (n == 0.0) return {Eigen::VectorXd::Zero(edge.size()), true};
  return {edge / n, false};
}

}  // namespace lframes
