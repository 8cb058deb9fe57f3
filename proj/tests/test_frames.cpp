#include <gtest/gtest.h>

#include <cmath>

#include "lframes/frames.hpp"
#include "test_util.hpp"

namespace lframes {
namespace {

// Single-layer network with zero weights and the given constant output.
nn::Mlp constant_net(int in, const std::vector<double>& out) {
  Rng rng(0);
  nn::Mlp m("const", {in, static_cast<int>(out.size())}, rng);
  m.weights()[0].value.setZero();
  for (std::size_t k = 0; k < out.size(); ++k) m.biases()[0].value(0, static_cast<Eigen::Index>(k)) = out[k];
  return m;
}

// Uniform in a cube of side `side`; dense enough that every node has a
// non-degenerate neighbourhood at the radii used below.
PointCloud scalar_cloud(Rng& rng, int n, double side) {
  std::uniform_real_distribution<double> u(-side / 2, side / 2);
  Matrix x(n, 3);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = u(rng);
  PointCloud c(x);
  c.features.emplace("s", FeatureBlock(test::random_matrix(rng, n, 1), RepSpec::parse("1x0n")));
  return c;
}

TEST(Envelope, Pins) {
  EXPECT_EQ(envelope(0.0, 1.0, 5), 1.0);
  EXPECT_EQ(envelope(0.5, 1.0, 5), 99.0 / 128.0);
  EXPECT_EQ(envelope(1.0, 1.0, 5), 0.0);
  EXPECT_EQ(envelope(2.0, 1.0, 5), 0.0);
  const double h = 1e-6, rc = 0.8;
  EXPECT_LT(std::abs(envelope(rc - h, rc, 5)), 1e-4);
  EXPECT_LT(std::abs((envelope(rc, rc, 5) - envelope(rc - h, rc, 5)) / h), 1e-4);
}

TEST(GramSchmidtPair, Examples) {
  Rng rng(1);
  GramSchmidtResult a = gram_schmidt_pair({2, 0, 0}, {1, 1, 0}, rng);
  EXPECT_LT((a.n1 - Eigen::Vector3d(1, 0, 0)).norm(), 1e-15);
  EXPECT_LT((a.n2 - Eigen::Vector3d(0, 1, 0)).norm(), 1e-15);
  EXPECT_FALSE(a.degenerate);
  GramSchmidtResult b = gram_schmidt_pair({0, 3, 4}, {0, 0, 1}, rng);
  EXPECT_LT((b.n1 - Eigen::Vector3d(0, 0.6, 0.8)).norm(), 1e-15);
  EXPECT_LT((b.n2 - Eigen::Vector3d(0, -0.8, 0.6)).norm(), 1e-15);
}

TEST(GramSchmidtPair, ParallelInputsUseSeededDirection) {
  Rng r1(5), r2(5);
  const GramSchmidtResult a = gram_schmidt_pair({1, 2, 3}, {2, 4, 6}, r1);
  const GramSchmidtResult b = gram_schmidt_pair({1, 2, 3}, {2, 4, 6}, r2);
  EXPECT_TRUE(a.degenerate);
  EXPECT_LT(std::abs(a.n1.dot(a.n2)), 1e-12);
  EXPECT_NEAR(a.n2.norm(), 1.0, 1e-12);
  EXPECT_EQ(a.n2, b.n2);
  Rng r3(6);
  const GramSchmidtResult z = gram_schmidt_pair({0, 0, 0}, {0, 0, 0}, r3);
  EXPECT_TRUE(z.degenerate);
  EXPECT_NEAR(z.n1.norm(), 1.0, 1e-12);
  EXPECT_LT(std::abs(z.n1.dot(z.n2)), 1e-12);
}

TEST(CompleteFrame, HandednessRule) {
  const Eigen::Vector3d e1(1, 0, 0), e2(0, 1, 0);
  const Orthogonal up = complete_frame(e1, e2, {0, 0, 2});
  EXPECT_NEAR(up.det(), 1.0, 1e-15);
  EXPECT_EQ(up.matrix()(2, 2), 1.0);
  const Orthogonal down = complete_frame(e1, e2, {0, 0, -2});
  EXPECT_NEAR(down.det(), -1.0, 1e-15);
  EXPECT_EQ(down.matrix()(2, 2), -1.0);
  const Orthogonal tie = complete_frame(e1, e2, {3, 0, 0});
  EXPECT_EQ(tie.matrix()(2, 2), 1.0);
  EXPECT_THROW(complete_frame(e1, Eigen::Vector3d(1, 1, 0).normalized(), {0, 0, 1}), std::invalid_argument);
}

TEST(LearnedFrameVectors, SingleNeighbourAndCancellation) {
  Matrix x(2, 3);
  x << 0, 0, 0, 0.3, 0.4, 0;
  const Graph g = radius_graph(x, 1.0);
  nn::Mlp phi = constant_net(frame_net_input_width(1), {1.0, 0.0});
  nn::Tape tape;
  LearnedFrameOptions opt;
  opt.cutoff = 1.0;
  auto [v1, v2] = learned_frame_vectors(tape, g, Matrix::Ones(2, 1), phi, opt, false);
  const double w = envelope(0.5, 1.0, 5);
  EXPECT_NEAR(v1.value()(0, 0), w * -0.6, 1e-15);
  EXPECT_NEAR(v1.value()(0, 1), w * -0.8, 1e-15);
  EXPECT_EQ(test::max_abs(v2.value()), 0.0);

  Matrix sym(3, 3);
  sym << 0, 0, 0, 0.2, 0.1, 0, -0.2, -0.1, 0;
  nn::Tape t2;
  nn::Mlp phi2 = constant_net(frame_net_input_width(1), {0.7, -0.3});
  auto [a, b] = learned_frame_vectors(t2, radius_graph(sym, 1.0), Matrix::Ones(3, 1), phi2, opt, false);
  EXPECT_LT(a.value().row(0).norm(), 1e-15);
  EXPECT_LT(b.value().row(0).norm(), 1e-15);
}

TEST(LearnedFrames, TransformLawIncludingReflections) {
  Rng rng(21);
  Rng init(3);
  nn::Mlp phi("phi", {frame_net_input_width(1), 16, 2}, init);
  for (int trial = 0; trial < 5; ++trial) {
    const PointCloud c = scalar_cloud(rng, 40, 0.5);
    LearnedFrameOptions opt;
    opt.cutoff = 0.5;
    const FrameSet f = build_learned_frames(c, radius_graph(c, 0.5), phi, opt);
    EXPECT_LT(f.max_orthogonality_error(), 1e-10);
    for (int k = 0; k < 4; ++k) {
      const Orthogonal r = random_orthogonal(rng, Group::O);
      const PointCloud m = c.transformed(r, Eigen::Vector3d(0.5, -1, 2));
      const FrameSet g = build_learned_frames(m, radius_graph(m, 0.5), phi, opt);
      for (int i = 0; i < c.size(); ++i) {
        const Eigen::MatrixXd expect = test::frame_matrix(f.rows, i) * r.matrix().transpose();
        EXPECT_LT((test::frame_matrix(g.rows, i) - expect).cwiseAbs().maxCoeff(), 1e-10);
      }
    }
  }
}

TEST(LearnedFrames, ReflectionThroughOriginFlipsDeterminant) {
  Rng rng(4), init(5);
  nn::Mlp phi("phi", {frame_net_input_width(1), 8, 2}, init);
  const PointCloud c = scalar_cloud(rng, 30, 0.5);
  LearnedFrameOptions opt;
  opt.cutoff = 0.6;
  const FrameSet f = build_learned_frames(c, radius_graph(c, 0.6), phi, opt);
  const PointCloud m = c.transformed(Orthogonal(-Eigen::MatrixXd::Identity(3, 3)), Eigen::Vector3d::Zero());
  const FrameSet g = build_learned_frames(m, radius_graph(m, 0.6), phi, opt);
  for (int i = 0; i < c.size(); ++i) EXPECT_NEAR(f.frame(i).det(), -g.frame(i).det(), 1e-12);
}

TEST(PcaFrames, CoplanarAndSimplex) {
  Rng rng(6);
  Matrix plane(12, 3);
  for (int i = 0; i < 12; ++i) {
    plane(i, 0) = 0.1 * std::cos(i * 0.7) * (1 + 0.3 * i / 12.0);
    plane(i, 1) = 0.05 * std::sin(i * 1.3);
    plane(i, 2) = 0.0;
  }
  plane.row(0).setZero();
  const FrameSet f = build_pca_frames(plane, radius_graph(plane, 1.0));
  EXPECT_LT(f.max_orthogonality_error(), 1e-12);
  EXPECT_NEAR(std::abs(test::frame_matrix(f.rows, 0)(2, 2)), 1.0, 1e-10);

  Matrix simplex(5, 3);
  simplex << 0, 0, 0, 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
  const FrameSet s = build_pca_frames(simplex, radius_graph(simplex, 2.0));
  EXPECT_LT(s.max_orthogonality_error(), 1e-10);
}

TEST(PcaFrames, TransformLaw) {
  Rng rng(8);
  const PointCloud c = scalar_cloud(rng, 40, 0.5);
  const FrameSet f = build_pca_frames(c, radius_graph(c, 0.5));
  for (int k = 0; k < 5; ++k) {
    const Orthogonal r = random_orthogonal(rng, Group::O);
    const PointCloud m = c.transformed(r, Eigen::Vector3d(1, 2, 3));
    const FrameSet g = build_pca_frames(m, radius_graph(m, 0.5));
    for (int i = 0; i < c.size(); ++i)
      EXPECT_LT((test::frame_matrix(g.rows, i) - test::frame_matrix(f.rows, i) * r.matrix().transpose())
                    .cwiseAbs()
                    .maxCoeff(),
                1e-8);
  }
}

TEST(RandomAndConstantFrames, Contracts) {
  const FrameSet id = build_constant_frames(4, Orthogonal::identity(3));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(test::frame_matrix(id.rows, i), Eigen::MatrixXd::Identity(3, 3));
  Rng a(3), b(3);
  const FrameSet ra = build_random_frames(6, a, Group::SO), rb = build_random_frames(6, b, Group::SO);
  EXPECT_EQ(ra.rows, rb.rows);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(ra.frame(i).det(), 1.0, 1e-12);
  Rng c(9);
  const FrameSet k = build_constant_frames(3, random_orthogonal(c, Group::O));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      EXPECT_LT((k.frame(i).matrix() * k.frame(j).matrix().transpose() - Eigen::MatrixXd::Identity(3, 3))
                    .cwiseAbs()
                    .maxCoeff(),
                1e-14);
}

TEST(RefineFrames, IdentityUpdateAndProperRotation) {
  Rng rng(10);
  const RepSpec spec = RepSpec::parse("2x0n+1x1n+1x1p");
  Rng fr(2);
  const FrameSet frames = build_random_frames(5, fr, Group::O);
  const FeatureBlock feats(test::random_matrix(rng, 5, spec.width()), spec);
  nn::Mlp ident = constant_net(spec.width(), {1, 0, 0, 0, 1, 0});
  const auto [f1, g1] = refine_frames(frames, feats, ident);
  EXPECT_LT(max_abs_diff(f1.rows, frames.rows), 1e-15);
  EXPECT_LT(max_abs_diff(g1.values, feats.values), 1e-15);

  Rng init(4);
  nn::Mlp net("refine", {spec.width(), 8, 6}, init);
  nn::Tape tape;
  const RefineResult r =
      refine_frames(tape, tape.constant(frames.rows), tape.constant(feats.values), spec, net, false, 0);
  for (int i = 0; i < 5; ++i) {
    const Eigen::MatrixXd u = test::frame_matrix(r.updates.value(), i);
    EXPECT_NEAR(u.determinant(), 1.0, 1e-12);
    EXPECT_NEAR(test::frame_matrix(r.frames.value(), i).determinant(), frames.frame(i).det(), 1e-12);
  }
}

TEST(FrameStability, Examples) {
  Rng rng(12);
  const FrameSet a = build_random_frames(4, rng, Group::O);
  const FrameStability same = frame_stability_metrics(a, a);
  EXPECT_EQ(same.frobenius, 0.0);
  for (double c : same.axis_cosine) EXPECT_NEAR(c, 1.0, 1e-15);

  FrameSet neg = a;
  neg.rows = -a.rows;
  const FrameStability n = frame_stability_metrics(a, neg);
  EXPECT_NEAR(n.frobenius, 2.0 * std::sqrt(3.0), 1e-12);
  for (double c : n.axis_cosine) EXPECT_NEAR(c, -1.0, 1e-12);

  FrameSet flip = a;
  const Eigen::MatrixXd rx = Eigen::Vector3d(1, -1, -1).asDiagonal();
  for (int i = 0; i < 4; ++i) {
    const Eigen::MatrixXd m = rx * a.frame(i).matrix();
    for (int k = 0; k < 9; ++k) flip.rows(i, k) = m(k / 3, k % 3);
  }
  const FrameStability f = frame_stability_metrics(a, flip);
  EXPECT_NEAR(f.axis_cosine[0], 1.0, 1e-12);
  EXPECT_NEAR(f.axis_cosine[1], -1.0, 1e-12);
  EXPECT_NEAR(f.axis_cosine[2], -1.0, 1e-12);

  EXPECT_THROW(frame_stability_metrics(a, build_random_frames(3, rng, Group::O)), std::invalid_argument);
}

TEST(EvenScalarInputs, SelectsParityEvenScalars) {
  PointCloud c(Matrix::Zero(2, 3));
  Matrix v(2, 5);
  v << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  c.features.emplace("a", FeatureBlock(v, RepSpec::parse("1x0n+1x0p+1x1n")));
  const Matrix s = even_scalar_inputs(c);
  ASSERT_EQ(s.cols(), 1);
  EXPECT_EQ(s(1, 0), 6.0);
}

}  // namespace
}  // namespace lframes
