#include "lframes/audit.hpp"

#include <algorithm>
#include <stdexcept>

namespace lframes {

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::logic_error("audit: output shapes differ");
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

Orthogonal audit_transform(Rng& rng, int k) {
  Orthogonal r = random_orthogonal(rng, Group::SO);
  if (k % 2 == 1) {
    Eigen::MatrixXd flip = Eigen::MatrixXd::Identity(3, 3);
    flip(0, 0) = -1;
    r = Orthogonal(flip) * r;
  }
  return r;
}

}  // namespace

std::vector<EquivarianceRow> audit_equivariance(Pipeline& model, const Dataset& data, int n_transforms,
                                                std::uint64_t seed, std::uint64_t frame_seed) {
  std::vector<EquivarianceRow> rows;
  const RepSpec& rho_out = model.config().rho_out;
  ForwardOptions fo;
  fo.frame_seed = frame_seed;
  for (std::size_t s = 0; s < data.samples.size(); ++s) {
    const PointCloud& x = data.samples[s].cloud;
    const FeatureBlock base = model.run(x, fo);
    Rng rng = split_rng(seed, s);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int k = 0; k < n_transforms; ++k) {
      const Orthogonal r = audit_transform(rng, k);
      const Eigen::Vector3d t(g(rng), g(rng), g(rng));
      const Matrix expected = apply_rep(rho_out, r, base).values;
      EquivarianceRow row;
      row.sample = static_cast<int>(s);
      row.transform = k;
      row.reflection = r.det() < 0;
      row.rotation_deviation =
          max_abs_diff(model.run(x.transformed(r, Eigen::Vector3d::Zero()), fo).values, expected);
      row.translation_deviation =
          max_abs_diff(model.run(x.transformed(Orthogonal::identity(3), t), fo).values, base.values);
      row.combined_deviation = max_abs_diff(model.run(x.transformed(r, t), fo).values, expected);
      rows.push_back(row);
    }
  }
  return rows;
}

double max_deviation(const std::vector<EquivarianceRow>& rows) {
  double m = 0.0;
  for (const auto& r : rows)
    m = std::max({m, r.rotation_deviation, r.translation_deviation, r.combined_deviation});
  return m;
}

std::vector<StabilityRow> audit_frame_stability(Pipeline& model, const Dataset& data,
                                                const std::vector<double>& sigmas, FrameProvenance frames,
                                                std::uint64_t seed) {
  if (frames != FrameProvenance::learned && frames != FrameProvenance::pca)
    throw std::invalid_argument("frame stability audit needs learned or pca frames");
  const double radius = model.config().frames.radius;
  auto build = [&](const PointCloud& c) {
    if (frames == FrameProvenance::pca) return build_pca_frames(c, radius_graph(c, radius));
    return model.frames_for(c);
  };
  std::vector<StabilityRow> rows;
  for (double sigma : sigmas) {
    if (sigma < 0) throw std::invalid_argument("sigma must be non-negative");
    StabilityRow row;
    row.sigma = sigma;
    row.axis_cosine.assign(3, 0.0);
    for (std::size_t s = 0; s < data.samples.size(); ++s) {
      const PointCloud& clean = data.samples[s].cloud;
      PointCloud noisy = clean;
      Rng rng = split_rng(seed, s);
      std::normal_distribution<double> g(0.0, sigma > 0 ? sigma : 1.0);
      if (sigma > 0)
        for (Eigen::Index k = 0; k < noisy.positions.size(); ++k) noisy.positions.data()[k] += g(rng);
      const FrameStability m = frame_stability_metrics(build(noisy), build(clean));
      row.frobenius += m.frobenius;
      for (int a = 0; a < 3; ++a) row.axis_cosine[a] += m.axis_cosine[a];
    }
    if (!data.samples.empty()) {
      row.frobenius /= static_cast<double>(data.samples.size());
      for (auto& c : row.axis_cosine) c /= static_cast<double>(data.samples.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace lframes
