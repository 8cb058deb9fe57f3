#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "lframes/nn.hpp"
#include "test_util.hpp"

namespace lframes::nn {
namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

TEST(Tape, SquareGradient) {
  Tape t;
  Var x = t.input(scalar(3.0));
  Var y = mul(x, x);
  t.backward(sum(y));
  EXPECT_EQ(t.grad(x)(0, 0), 6.0);
}

TEST(Tape, SharedSubexpressionAccumulates) {
  Tape t;
  Var x = t.input(scalar(2.0));
  Var y = add(mul(x, x), scale(x, 3.0));  // 2x + 3
  t.backward(sum(y));
  EXPECT_EQ(t.grad(x)(0, 0), 7.0);
}

TEST(Tape, SegmentMaxRoutesToFirstMaximum) {
  Tape t;
  Matrix a(3, 2);
  a << 1, 5, 4, 5, 2, 0;
  Var x = t.input(a);
  Var m = segment_max(x, {0, 3});
  EXPECT_EQ(m.value()(0, 0), 4.0);
  EXPECT_EQ(m.value()(0, 1), 5.0);
  t.backward(sum(m));
  Matrix expect = Matrix::Zero(3, 2);
  expect(1, 0) = 1.0;
  expect(0, 1) = 1.0;
  EXPECT_EQ(t.grad(x), expect);
}

TEST(Tape, EmptySegmentsGiveZeros) {
  Tape t;
  Var x = t.input(Matrix::Ones(2, 1));
  Var m = segment_max(x, {0, 0, 2});
  EXPECT_EQ(m.value()(0, 0), 0.0);
  EXPECT_EQ(m.value()(1, 0), 1.0);
  Var s = segment_sum(x, {0, 0, 2});
  EXPECT_EQ(s.value()(1, 0), 2.0);
}

TEST(Tape, BackwardRequiresScalarLoss) {
  Tape t;
  Var x = t.input(Matrix::Ones(2, 2));
  EXPECT_THROW(t.backward(x), std::invalid_argument);
}

TEST(Mlp, DeterministicAndGlorotBounded) {
  Rng rng(1);
  Mlp m("m", {4, 8, 3}, rng);
  EXPECT_EQ(m.parameter_count(), static_cast<std::size_t>((4 + 1) * 8 + (8 + 1) * 3));
  const double bound = std::sqrt(6.0 / (4 + 8));
  EXPECT_LE(m.weights()[0].value.cwiseAbs().maxCoeff(), bound);
  const Matrix x = test::random_matrix(rng, 5, 4);
  Tape a, b;
  EXPECT_EQ(m.forward(a, a.constant(x)).value(), m.forward(b, b.constant(x)).value());
  Rng r1(9), r2(9);
  EXPECT_EQ(Mlp("a", {3, 2}, r1).weights()[0].value, Mlp("a", {3, 2}, r2).weights()[0].value);
}

TEST(FeatureNorm, StandardisesBatch) {
  Rng rng(2);
  FeatureNorm norm("n", 3);
  Matrix x = test::random_matrix(rng, 50, 3, 4.0);
  x.col(1).setConstant(7.0);
  Tape t;
  const Matrix y = norm.forward(t, t.constant(x), true).value();
  EXPECT_LT(y.col(1).cwiseAbs().maxCoeff(), 1e-12);
  for (int c : {0, 2}) {
    const double mean = y.col(c).mean();
    const double var = (y.col(c).array() - mean).square().mean();
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-3);  // eps in the denominator
  }
  EXPECT_GT(std::abs(norm.running_mean()(0, 1)), 0.0);
}

TEST(Losses, Examples) {
  Tape t;
  Matrix a(2, 3);
  a << 1, 0, 0, 0, 2, 0;
  Matrix b(2, 3);
  b << 3, 0, 0, 0, 0, 1;
  EXPECT_NEAR(cosine_similarity(t.constant(a), t.constant(a)).scalar(), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(t.constant(a), t.constant(b)).scalar(), 0.5, 1e-12);
  EXPECT_EQ(l1_loss(t.constant(a), t.constant(a)).scalar(), 0.0);
  EXPECT_NEAR(l1_loss(t.constant(a), t.constant(b)).scalar(), (2.0 + 3.0) / 6.0, 1e-15);
  Matrix logits = Matrix::Zero(1, 4);
  EXPECT_NEAR(cross_entropy(t.constant(logits), {2}, 0.0).scalar(), std::log(4.0), 1e-14);
  EXPECT_NEAR(cross_entropy(t.constant(logits), {2}, 0.3).scalar(), std::log(4.0), 1e-14);
}

TEST(AdamW, ZeroGradientAndDecay) {
  Parameter p("p", Matrix::Constant(2, 2, 1.5));
  AdamW plain({&p}, {});
  plain.step(0.1);
  EXPECT_EQ(p.value, Matrix::Constant(2, 2, 1.5));
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  AdamW decayed({&p}, cfg);
  decayed.step(0.1);
  EXPECT_NEAR(p.value(0, 0), 1.5 * (1 - 0.1 * 0.01), 1e-15);
}

TEST(AdamW, MinimisesQuadratic) {
  Parameter w("w", scalar(0.0));
  AdamW opt({&w}, {});
  for (int k = 0; k < 50; ++k) {
    opt.zero_grad();
    Tape t;
    Var d = add_scalar(t.param(w), -2.0);
    t.backward(sum(mul(d, d)));
    opt.step(0.1);
  }
  EXPECT_NEAR(w.value(0, 0), 2.0, 0.1);
}

TEST(Schedule, WarmupAndCosine) {
  EXPECT_EQ(cosine_lr_schedule(0, 100, 10, 1e-3), 0.0);
  EXPECT_NEAR(cosine_lr_schedule(10, 100, 10, 1e-3), 1e-3, 1e-18);
  EXPECT_NEAR(cosine_lr_schedule(55, 100, 10, 1e-3), 0.5e-3, 1e-15);
  EXPECT_NEAR(cosine_lr_schedule(100, 100, 10, 1e-3), 0.0, 1e-18);
}

TEST(Clip, NeverIncreasesNorm) {
  Rng rng(4);
  Parameter a("a", Matrix::Zero(3, 3)), b("b", Matrix::Zero(2, 1));
  for (int k = 0; k < 10; ++k) {
    a.grad = test::random_matrix(rng, 3, 3, 2.0);
    b.grad = test::random_matrix(rng, 2, 1, 2.0);
    const double before = grad_norm({&a, &b});
    EXPECT_EQ(clip_grad_norm({&a, &b}, 1.0), before);
    const double after = grad_norm({&a, &b});
    EXPECT_LE(after, std::min(before, 1.0) + 1e-12);
  }
  a.grad.setConstant(1e-3);
  b.grad.setZero();
  const Matrix keep = a.grad;
  clip_grad_norm({&a, &b}, 1.0);
  EXPECT_EQ(a.grad, keep);
}

TEST(GradCheck, MlpWithNorm) {
  Rng rng(5);
  Mlp m("m", {3, 6, 2}, rng, true);
  const Matrix x = test::random_matrix(rng, 7, 3);
  const GradCheckResult r = check_gradients(
      [&](Tape& t) {
        Var y = m.forward(t, t.constant(x), true);
        return mean(mul(y, y));
      },
      m.parameters(), 1e-6, 1e-3);
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(Checkpoint, RoundTripAndShapeMismatch) {
  Rng rng(6);
  Matrix a = test::random_matrix(rng, 3, 4), b = test::random_matrix(rng, 1, 2);
  const auto dir = std::filesystem::temp_directory_path() / "lframes_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string bin = (dir / "c.bin").string(), man = (dir / "c.json").string();
  save_checkpoint(bin, man, {{"a", &a}, {"b", &b}}, {{"seed", "7"}});
  Matrix a2 = Matrix::Zero(3, 4), b2 = Matrix::Zero(1, 2);
  const CheckpointManifest m = load_checkpoint(bin, man, {{"a", &a2}, {"b", &b2}});
  EXPECT_EQ(a2, a);
  EXPECT_EQ(b2, b);
  EXPECT_EQ(m.meta.at("seed"), "7");
  Matrix wrong = Matrix::Zero(2, 2);
  EXPECT_THROW(load_checkpoint(bin, man, {{"a", &wrong}, {"b", &b2}}), std::runtime_error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace lframes::nn
