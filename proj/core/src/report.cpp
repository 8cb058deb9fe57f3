#include "lframes/report.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace lframes {

using json = nlohmann::json;

namespace {

json metric_json(const MetricRow& r) {
  json j{{"step", r.step}, {"loss", r.loss}, {"metric", r.metric}, {"lr", r.lr}, {"grad_norm", r.grad_norm}};
  if (r.eval_metric) j["eval_metric"] = *r.eval_metric;
  return j;
}

std::ostringstream csv_stream() {
  std::ostringstream os;
  os << std::setprecision(10);
  return os;
}

}  // namespace

std::string report_to_json(const RunReport& r) {
  json j;
  j["command"] = r.command;
  j["status"] = r.status;
  if (!r.error.empty()) j["error"] = r.error;
  j["seed"] = r.seed;
  j["config"] = r.config_json.empty() ? json::object() : json::parse(r.config_json);
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  j["summary"] = r.summary;
  j["metrics"] = json::array();
  for (const auto& m : r.metrics) j["metrics"].push_back(metric_json(m));
  j["equivariance"] = json::array();
  for (const auto& e : r.equivariance)
    j["equivariance"].push_back({{"sample", e.sample},
                                 {"transform", e.transform},
                                 {"reflection", e.reflection},
                                 {"rotation_deviation", e.rotation_deviation},
                                 {"translation_deviation", e.translation_deviation},
                                 {"combined_deviation", e.combined_deviation}});
  j["frame_stability"] = json::array();
  for (const auto& s : r.stability)
    j["frame_stability"].push_back({{"sigma", s.sigma}, {"frobenius", s.frobenius}, {"axis_cosine", s.axis_cosine}});
  if (!r.ablation.empty()) {
    j["ablation"] = json::array();
    for (const auto& c : r.ablation)
      j["ablation"].push_back({{"mode", to_string(c.mode)},
                               {"frames", to_string(c.frames)},
                               {"seeds", c.seeds},
                               {"metrics", c.metrics},
                               {"median", c.median},
                               {"parameters", c.parameters},
                               {"frame_net_parameters", c.frame_net_parameters}});
  }
  if (!r.sweep.empty()) {
    j["sweep"] = json::array();
    for (const auto& s : r.sweep)
      j["sweep"].push_back({{"fraction", s.fraction}, {"mode", s.mode}, {"final_error", s.final_error}});
  }
  return j.dump(2);
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  auto os = csv_stream();
  os << "step,loss,metric,eval_metric,lr,grad_norm\n";
  for (const auto& r : rows) {
    os << r.step << ',' << r.loss << ',' << r.metric << ',';
    if (r.eval_metric) os << *r.eval_metric;
    os << ',' << r.lr << ',' << r.grad_norm << '\n';
  }
  return os.str();
}

std::string equivariance_csv(const std::vector<EquivarianceRow>& rows) {
  auto os = csv_stream();
  os << "sample,transform,reflection,rotation_deviation,translation_deviation,combined_deviation\n";
  for (const auto& r : rows)
    os << r.sample << ',' << r.transform << ',' << (r.reflection ? 1 : 0) << ',' << r.rotation_deviation << ','
       << r.translation_deviation << ',' << r.combined_deviation << '\n';
  return os.str();
}

std::string stability_csv(const std::vector<StabilityRow>& rows) {
  auto os = csv_stream();
  os << "sigma,frobenius,cos_axis1,cos_axis2,cos_axis3\n";
  for (const auto& r : rows) {
    os << r.sigma << ',' << r.frobenius;
    for (double c : r.axis_cosine) os << ',' << c;
    os << '\n';
  }
  return os.str();
}

std::string ablation_csv(const std::vector<AblationCell>& cells) {
  auto os = csv_stream();
  os << "mode,frames,median,metrics,parameters,frame_net_parameters\n";
  for (const auto& c : cells) {
    os << to_string(c.mode) << ',' << to_string(c.frames) << ',' << c.median << ',';
    for (std::size_t k = 0; k < c.metrics.size(); ++k) os << (k ? ";" : "") << c.metrics[k];
    os << ',' << c.parameters << ',' << c.frame_net_parameters << '\n';
  }
  return os.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  auto os = csv_stream();
  os << "fraction,mode,final_error\n";
  for (const auto& r : rows) os << r.fraction << ',' << r.mode << ',' << r.final_error << '\n';
  return os.str();
}

std::string frame_set_to_json(const FrameSet& frames) {
  json j;
  j["dim"] = frames.dim;
  j["provenance"] = to_string(frames.provenance);
  j["frames"] = json::array();
  for (int i = 0; i < frames.size(); ++i) {
    std::vector<double> row(frames.rows.row(i).data(), frames.rows.row(i).data() + frames.rows.cols());
    j["frames"].push_back(row);
  }
  return j.dump();
}

FrameSet frame_set_from_json(const std::string& text) {
  const json j = json::parse(text);
  FrameSet fs;
  fs.dim = j.value("dim", 3);
  fs.provenance = frame_provenance_from_string(j.value("provenance", std::string("identity")));
  const auto& rows = j.at("frames");
  const int w = fs.dim * fs.dim;
  fs.rows.resize(static_cast<Eigen::Index>(rows.size()), w);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = rows[i].get<std::vector<double>>();
    if (static_cast<int>(v.size()) != w) throw std::invalid_argument("frame row has the wrong length");
    for (int c = 0; c < w; ++c) fs.rows(static_cast<Eigen::Index>(i), c) = v[c];
  }
  return fs;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace lframes
