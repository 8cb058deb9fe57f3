#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "lframes/geometry.hpp"
#include "lframes/reps.hpp"

namespace lframes::test {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = g(rng);
  return m;
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  return max_abs(a - b);
}

inline Eigen::MatrixXd frame_matrix(const Matrix& rows, int i) {
  Eigen::MatrixXd r(3, 3);
  for (int k = 0; k < 9; ++k) r(k / 3, k % 3) = rows(i, k);
  return r;
}

}  // namespace lframes::test

namespace lframes {
using test::max_abs_diff;
}
