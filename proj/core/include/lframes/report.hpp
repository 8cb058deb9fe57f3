// JSON and CSV run reports, written atomically.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "lframes/audit.hpp"
#include "lframes/frames.hpp"
#include "lframes/train.hpp"

namespace lframes {

struct RunReport {
  std::string command;
  std::string config_json;  // full task spec echo
  std::uint64_t seed = 0;
  std::vector<MetricRow> metrics;
  std::vector<EquivarianceRow> equivariance;
  std::vector<StabilityRow> stability;
  std::vector<AblationCell> ablation;
  std::vector<SweepRow> sweep;
  std::map<std::string, double> summary;
  double wall_clock_seconds = 0.0;
  std::string status = "ok";
  std::string error;
};

std::string report_to_json(const RunReport& report);

std::string metrics_csv(const std::vector<MetricRow>& rows);
std::string equivariance_csv(const std::vector<EquivarianceRow>& rows);
std::string stability_csv(const std::vector<StabilityRow>& rows);
std::string ablation_csv(const std::vector<AblationCell>& cells);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// {"dim": 3, "provenance": ..., "frames": [[r00, r01, ..., r22], ...]}
std::string frame_set_to_json(const FrameSet& frames);
FrameSet frame_set_from_json(const std::string& text);

/// Writes to `path`.tmp and renames over `path`.
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace lframes
