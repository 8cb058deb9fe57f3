#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "lframes/frames.hpp"
#include "lframes/geometry.hpp"
#include "test_util.hpp"

namespace lframes {
namespace {

std::set<std::pair<int, int>> edge_set(const Graph& g) {
  std::set<std::pair<int, int>> s;
  for (int i = 0; i < g.num_centers(); ++i)
    for (int e = g.offsets[i]; e < g.offsets[i + 1]; ++e) s.insert({i, g.sources[e]});
  return s;
}

TEST(RadiusGraph, TwoPoints) {
  Matrix x(2, 3);
  x << 0, 0, 0, 0.5, 0, 0;
  const Graph g = radius_graph(x, 1.0);
  EXPECT_EQ(edge_set(g), (std::set<std::pair<int, int>>{{0, 1}, {1, 0}}));
  EXPECT_NEAR(g.dist[0], 0.5, 1e-15);
  EXPECT_NEAR(g.rel(0, 0), 0.5, 1e-15);
  EXPECT_EQ(radius_graph(x, 0.5).num_edges(), 0);
}

TEST(RadiusGraph, MatchesBruteForce) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix x(10, 3);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = u(rng);
    std::set<std::pair<int, int>> expect;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j)
        if (i != j && (x.row(i) - x.row(j)).norm() < 0.3) expect.insert({i, j});
    const Graph g = radius_graph(x, 0.3);
    EXPECT_EQ(edge_set(g), expect);
    for (int i = 0; i < g.num_centers(); ++i)
      EXPECT_TRUE(std::is_sorted(g.sources.begin() + g.offsets[i], g.sources.begin() + g.offsets[i + 1]));
  }
}

TEST(RadiusGraph, InvariantUnderRigidMotion) {
  Rng rng(4);
  const Matrix x = test::random_matrix(rng, 30, 3, 0.3);
  const Orthogonal r = random_orthogonal(rng, Group::O);
  PointCloud c(x);
  const PointCloud moved = c.transformed(r, Eigen::Vector3d(1, -2, 0.5));
  EXPECT_EQ(edge_set(radius_graph(c, 0.25)), edge_set(radius_graph(moved, 0.25)));
}

TEST(RadiusGraph, BipartiteExcludesCenterAndIndexesSources) {
  Matrix x(4, 3);
  x << 0, 0, 0, 0.1, 0, 0, 0.2, 0, 0, 5, 0, 0;
  const Graph g = radius_graph_bipartite(x, {1, 3}, 0.15);
  ASSERT_EQ(g.num_centers(), 2);
  EXPECT_EQ(g.degree(0), 2);
  EXPECT_EQ(g.sources[0], 0);
  EXPECT_EQ(g.sources[1], 2);
  EXPECT_EQ(g.degree(1), 0);
}

TEST(FarthestPointSampling, Examples) {
  Matrix line(3, 3);
  line << 0, 0, 0, 1, 0, 0, 3, 0, 0;
  EXPECT_EQ(farthest_point_sampling(line, 2, 0), (std::vector<int>{0, 2}));
  Rng rng(8);
  const Matrix x = test::random_matrix(rng, 12, 3);
  const std::vector<int> all = farthest_point_sampling(x, 12, 5);
  EXPECT_EQ(all.front(), 5);
  EXPECT_EQ(std::set<int>(all.begin(), all.end()).size(), 12u);
  const Orthogonal r = random_orthogonal(rng, Group::O);
  const PointCloud moved = PointCloud(x).transformed(r, Eigen::Vector3d(3, 1, 2));
  EXPECT_EQ(farthest_point_sampling(x, 7), farthest_point_sampling(moved, 7));
  EXPECT_THROW(farthest_point_sampling(x, 0), std::invalid_argument);
  EXPECT_THROW(farthest_point_sampling(x, 13), std::invalid_argument);
}

TEST(FarthestPointSampling, TiesGoToLowestIndex) {
  Matrix x(3, 3);
  x << 0, 0, 0, 1, 0, 0, -1, 0, 0;
  EXPECT_EQ(farthest_point_sampling(x, 2, 0), (std::vector<int>{0, 1}));
}

TEST(LocalCenterOfMass, EnvelopeWeights) {
  const double rc = 1.0;
  Matrix x(2, 3);
  x << 0, 0, 0, 0.5, 0, 0;
  const Graph g = radius_graph(x, rc);
  const auto w = [&](double r) { return envelope(r, rc, 5); };
  const Eigen::VectorXd c = local_center_of_mass(g, 0, w);
  EXPECT_NEAR(c(0), 0.5 * 99.0 / 128.0, 1e-15);
  Matrix sym(3, 3);
  sym << 0, 0, 0, 0.3, 0.1, 0, -0.3, -0.1, 0;
  EXPECT_LT(local_center_of_mass(radius_graph(sym, rc), 0, w).norm(), 1e-15);
  Matrix lone(2, 3);
  lone << 0, 0, 0, 4, 0, 0;
  EXPECT_EQ(local_center_of_mass(radius_graph(lone, rc), 0, w).norm(), 0.0);
}

TEST(LocalCenterOfMass, Equivariant) {
  Rng rng(9);
  const Matrix x = test::random_matrix(rng, 20, 3, 0.3);
  const Orthogonal r = random_orthogonal(rng, Group::O);
  const PointCloud moved = PointCloud(x).transformed(r, Eigen::Vector3d(1, 1, 1));
  const auto w = [](double d) { return envelope(d, 0.5, 5); };
  const Graph a = radius_graph(x, 0.5), b = radius_graph(moved, 0.5);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd expect = r.matrix() * local_center_of_mass(a, i, w);
    EXPECT_LT((local_center_of_mass(b, i, w) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GaussianRadialEmbedding, Pins) {
  const Eigen::VectorXd mid = gaussian_radial_embedding(0.5, 2, 1.0);
  EXPECT_NEAR(mid(0), 0.5, 1e-12);
  EXPECT_NEAR(mid(1), 0.5, 1e-12);
  const double sigma = 1.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  EXPECT_NEAR(gaussian_embedding_sigma(2, 1.0), sigma, 1e-15);
  const Eigen::VectorXd at0 = gaussian_radial_embedding(0.0, 2, 1.0);
  EXPECT_NEAR(at0(0), 1.0, 1e-15);
  EXPECT_NEAR(at0(1), std::exp(-1.0 / (2 * sigma * sigma)), 1e-15);
  const int k = 8;
  const double rmax = 0.7, delta = rmax / (k - 1);
  for (int m = 0; m < k; ++m) EXPECT_NEAR(gaussian_radial_embedding(m * delta, k, rmax)(m), 1.0, 1e-12);
  for (int m = 0; m + 1 < k; ++m) {
    const Eigen::VectorXd e = gaussian_radial_embedding((m + 0.5) * delta, k, rmax);
    EXPECT_NEAR(e(m), 0.5, 1e-12);
    EXPECT_NEAR(e(m + 1), 0.5, 1e-12);
    EXPECT_GT(e.minCoeff(), 0.0);
    EXPECT_LE(e.maxCoeff(), 1.0);
  }
  EXPECT_THROW(gaussian_radial_embedding(0.1, 1, 1.0), std::invalid_argument);
}

TEST(UnitEdgeDirection, Cases) {
  const EdgeDirection a = unit_edge_direction(Eigen::Vector3d(3, 4, 0));
  EXPECT_FALSE(a.degenerate);
  EXPECT_NEAR(a.direction(0), 0.6, 1e-15);
  EXPECT_NEAR(a.direction(1), 0.8, 1e-15);
  const EdgeDirection z = unit_edge_direction(Eigen::Vector3d::Zero());
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.direction.norm(), 0.0);
  Rng rng(1);
  for (int k = 0; k < 20; ++k)
    EXPECT_NEAR(unit_edge_direction(test::random_matrix(rng, 3, 1)).direction.norm(), 1.0, 1e-12);
}

TEST(PointCloudIo, RoundTripWithNormalsAndFeatures) {
  Rng rng(12);
  PointCloud c(test::random_matrix(rng, 6, 3));
  Matrix n = test::random_matrix(rng, 6, 3);
  n.rowwise().normalize();
  c.normals = n;
  c.features.emplace("a", FeatureBlock(test::random_matrix(rng, 6, 1), RepSpec::parse("1x0n")));
  c.features.emplace("b", FeatureBlock(test::random_matrix(rng, 6, 4), RepSpec::parse("1x0p+1x1n")));
  const auto dir = std::filesystem::temp_directory_path() / "lframes_io_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "c.xyz").string();
  write_point_cloud(path, c);
  const PointCloud r = read_point_cloud(path);
  EXPECT_LT(max_abs_diff(r.positions, c.positions), 1e-15);
  ASSERT_TRUE(r.normals.has_value());
  EXPECT_LT(max_abs_diff(*r.normals, n), 1e-15);
  ASSERT_EQ(r.features.size(), 2u);
  EXPECT_EQ(r.features.at("b").spec, RepSpec::parse("1x0p+1x1n"));
  EXPECT_LT(max_abs_diff(r.features.at("b").values, c.features.at("b").values), 1e-15);
  std::filesystem::remove_all(dir);
}

TEST(PointCloudIo, ReadsPlainFileWithComments) {
  const auto path = std::filesystem::temp_directory_path() / "lframes_plain.xyz";
  {
    std::ofstream out(path);
    out << "# two points\n0 0 0\n\n1 2 3  # trailing\n";
  }
  const PointCloud r = read_point_cloud(path.string());
  ASSERT_EQ(r.size(), 2);
  EXPECT_EQ(r.positions(1, 2), 3.0);
  std::filesystem::remove(path);
}

TEST(PointCloud, ValidateRejectsBadNormals) {
  PointCloud c(Matrix::Zero(2, 3));
  c.normals = Matrix::Ones(2, 3);
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace lframes
