#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lframes/geometry.hpp"

namespace lframes {

namespace {

std::string sidecar_path(const std::string& path) { return path + ".json"; }

}  // namespace

void write_point_cloud(const std::string& path, const PointCloud& cloud) {
  cloud.validate();
  nlohmann::json header;
  header["dim"] = cloud.dim();
  header["count"] = cloud.size();
  header["has_normals"] = cloud.normals.has_value();
  header["features"] = nlohmann::json::array();
  for (const auto& [name, block] : cloud.features)
    header["features"].push_back({{"name", name}, {"rep", block.spec.to_string()}});
  {
    std::ofstream js(sidecar_path(path));
    if (!js) throw std::runtime_error("cannot write " + sidecar_path(path));
    js << header.dump(2) << '\n';
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# x y z" << (cloud.normals ? " nx ny nz" : "");
  for (const auto& [name, block] : cloud.features) out << ' ' << name << '[' << block.spec.width() << ']';
  out << '\n' << std::setprecision(17);
  for (int i = 0; i < cloud.size(); ++i) {
    for (int c = 0; c < cloud.dim(); ++c) out << (c ? " " : "") << cloud.positions(i, c);
    if (cloud.normals)
      for (int c = 0; c < cloud.dim(); ++c) out << ' ' << (*cloud.normals)(i, c);
    for (const auto& [name, block] : cloud.features)
      for (Eigen::Index c = 0; c < block.values.cols(); ++c) out << ' ' << block.values(i, c);
    out << '\n';
  }
}

PointCloud read_point_cloud(const std::string& path) {
  CloudFileHeader header;
  if (std::filesystem::exists(sidecar_path(path))) {
    std::ifstream js(sidecar_path(path));
    const auto j = nlohmann::json::parse(js);
    header.dim = j.value("dim", 3);
    header.has_normals = j.value("has_normals", false);
    for (const auto& f : j.value("features", nlohmann::json::array()))
      header.features.emplace_back(f.at("name").get<std::string>(), f.at("rep").get<std::string>());
  }
  std::vector<RepSpec> specs;
  int expected = header.dim * (header.has_normals ? 2 : 1);
  for (const auto& [name, rep] : header.features) {
    specs.push_back(RepSpec::parse(rep, header.dim));
    expected += specs.back().width();
  }

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (!ls.eof()) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad number");
    if (vals.empty()) continue;
    // Without a sidecar, 6 columns means positions plus normals.
    if (header.features.empty() && !std::filesystem::exists(sidecar_path(path)) && rows.empty() &&
        static_cast<int>(vals.size()) == 2 * header.dim) {
      header.has_normals = true;
      expected = 2 * header.dim;
    }
    if (static_cast<int>(vals.size()) != expected)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(expected) + " columns");
    rows.push_back(std::move(vals));
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  PointCloud cloud(Matrix(n, header.dim));
  if (header.has_normals) cloud.normals = Matrix(n, header.dim);
  std::vector<Matrix> blocks;
  for (const auto& s : specs) blocks.emplace_back(n, s.width());
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (int k = 0; k < header.dim; ++k) cloud.positions(i, k) = rows[i][c++];
    if (header.has_normals)
      for (int k = 0; k < header.dim; ++k) (*cloud.normals)(i, k) = rows[i][c++];
    for (auto& b : blocks)
      for (Eigen::Index k = 0; k < b.cols(); ++k) b(i, k) = rows[i][c++];
  }
  for (std::size_t f = 0; f < specs.size(); ++f)
    cloud.features.emplace(header.features[f].first, FeatureBlock(std::move(blocks[f]), specs[f]));
  if (cloud.normals) {
    // Text round-off can push norms outside the 1e-9 band; renormalise.
    for (Eigen::Index i = 0; i < n; ++i) cloud.normals->row(i).normalize();
  }
  cloud.validate();
  return cloud;
}

}  // namespace lframes
