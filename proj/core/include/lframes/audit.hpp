// Equivariance and frame-robustness audits of a pipeline.
#pragma once

#include <cstdint>
#include <vector>

#include "lframes/datasets.hpp"
#include "lframes/mp.hpp"

namespace lframes {

struct EquivarianceRow {
  int sample = 0;
  int transform = 0;
  bool reflection = false;
  /// max |run(Rx) - rho_out(R) run(x)|
  double rotation_deviation = 0.0;
  /// max |run(x + t) - run(x)|
  double translation_deviation = 0.0;
  /// max |run(Rx + t) - rho_out(R) run(x)|
  double combined_deviation = 0.0;
};

/// Transform k is a Haar rotation, composed with a reflection for odd k, and a
/// Gaussian translation of scale 2. Frame sampling uses `frame_seed` for both
/// runs.
std::vector<EquivarianceRow> audit_equivariance(Pipeline& model, const Dataset& data, int n_transforms,
                                                std::uint64_t seed, std::uint64_t frame_seed = 0);

double max_deviation(const std::vector<EquivarianceRow>& rows);

struct StabilityRow {
  double sigma = 0.0;
  double frobenius = 0.0;
  std::vector<double> axis_cosine;
};

/// Per sigma, frames rebuilt on jittered clouds against the clean frames,
/// averaged over samples. Only learned and PCA frames are meaningful here.
std::vector<StabilityRow> audit_frame_stability(Pipeline& model, const Dataset& data,
                                                const std::vector<double>& sigmas, FrameProvenance frames,
                                                std::uint64_t seed);

}  // namespace lframes
