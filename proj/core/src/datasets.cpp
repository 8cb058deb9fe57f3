#include "lframes/datasets.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lframes/frames.hpp"

namespace lframes {

using json = nlohmann::json;

const char* to_string(TaskKind t) {
  switch (t) {
    case TaskKind::normal_regression: return "normal-regression";
    case TaskKind::directional_relay: return "directional-relay";
    case TaskKind::shape_classification: return "shape-classification";
  }
  return "normal-regression";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "normal-regression") return TaskKind::normal_regression;
  if (s == "directional-relay") return TaskKind::directional_relay;
  if (s == "shape-classification") return TaskKind::shape_classification;
  throw std::invalid_argument("unknown task '" + s + "'");
}

const std::vector<std::string>& shape_families() {
  static const std::vector<std::string> f{"sphere", "torus", "superellipsoid"};
  return f;
}

PointCloud sample_sphere(int n, Rng& rng, double radius) {
  std::normal_distribution<double> g;
  PointCloud c(Matrix(n, 3));
  Matrix normals(n, 3);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d u;
    do {
      u = Eigen::Vector3d(g(rng), g(rng), g(rng));
    } while (u.norm() < 1e-12);
    u.normalize();
    normals.row(i) = u.transpose();
    c.positions.row(i) = radius * u.transpose();
  }
  c.normals = std::move(normals);
  return c;
}

Eigen::Vector3d torus_point(double theta, double phi, double major, double minor) {
  const double ring = major + minor * std::cos(theta);
  return {ring * std::cos(phi), ring * std::sin(phi), minor * std::sin(theta)};
}

Eigen::Vector3d torus_normal(const Eigen::Vector3d& p, double major) {
  // Gradient of (sqrt(x^2 + y^2) - R)^2 + z^2.
  const double rho = std::hypot(p.x(), p.y());
  const double s = (rho - major) / rho;
  Eigen::Vector3d g(s * p.x(), s * p.y(), p.z());
  return g.normalized();
}

PointCloud sample_torus(int n, Rng& rng, double major, double minor) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud c(Matrix(n, 3));
  Matrix normals(n, 3);
  for (int i = 0; i < n; ++i) {
    double theta;
    // Area element is proportional to R + r cos(theta).
    do {
      theta = angle(rng);
    } while (unit(rng) * (major + minor) > major + minor * std::cos(theta));
    const double phi = angle(rng);
    const Eigen::Vector3d p = torus_point(theta, phi, major, minor);
    c.positions.row(i) = p.transpose();
    normals.row(i) = torus_normal(p, major).transpose();
  }
  c.normals = std::move(normals);
  return c;
}

PointCloud sample_superellipsoid(int n, Rng& rng, double e) {
  if (!(e >= 1.0)) throw std::invalid_argument("superellipsoid exponent must be at least 1");
  std::normal_distribution<double> g;
  PointCloud c(Matrix(n, 3));
  Matrix normals(n, 3);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d u;
    do {
      u = Eigen::Vector3d(g(rng), g(rng), g(rng));
    } while (u.norm() < 1e-12);
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += std::pow(std::abs(u[k]), e);
    const Eigen::Vector3d p = u / std::pow(s, 1.0 / e);
    Eigen::Vector3d grad;
    for (int k = 0; k < 3; ++k) grad[k] = std::copysign(std::pow(std::abs(p[k]), e - 1.0), p[k]);
    c.positions.row(i) = p.transpose();
    normals.row(i) = grad.normalized().transpose();
  }
  c.normals = std::move(normals);
  return c;
}

namespace {

PointCloud sample_family(const std::string& family, const DatasetSpec& spec, Rng& rng) {
  if (family == "sphere") return sample_sphere(spec.points, rng);
  if (family == "torus") return sample_torus(spec.points, rng, spec.torus_major, spec.torus_minor);
  if (family == "superellipsoid") return sample_superellipsoid(spec.points, rng, spec.superellipsoid_exponent);
  throw std::invalid_argument("unknown shape family '" + family + "'");
}

std::vector<std::string> family_list(const std::string& family) {
  if (family == "mixed") return shape_families();
  std::vector<std::string> out;
  std::stringstream ss(family);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto& known = shape_families();
    if (std::find(known.begin(), known.end(), item) == known.end())
      throw std::invalid_argument("unknown shape family '" + item + "'");
    out.push_back(item);
  }
  if (out.empty()) throw std::invalid_argument("empty shape family");
  return out;
}

std::string pick_family(const DatasetSpec& spec, Rng& rng, int index) {
  if (spec.task == TaskKind::shape_classification) return shape_families()[index % shape_families().size()];
  const std::vector<std::string> families = family_list(spec.family);
  if (families.size() == 1) return families.front();
  std::uniform_int_distribution<std::size_t> pick(0, families.size() - 1);
  return families[pick(rng)];
}

// A base cluster near a random surface point m carries the offset from its
// centroid to the centroid of a tip cluster around m + offset*t (t a random
// tangent) as a 1x1n feature. Every node regresses the unit projection of that
// offset onto its own tangent plane.
Sample relay_sample(const DatasetSpec& spec, Rng& rng) {
  if (spec.marker_points < 1 || 2 * spec.marker_points > spec.points)
    throw std::invalid_argument("relay needs 1 <= marker_points <= points/2");
  Sample s;
  s.family = "sphere";
  s.cloud = sample_sphere(spec.points, rng);
  const Matrix& x = s.cloud.positions;
  std::normal_distribution<double> g;
  const Eigen::Vector3d m = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
  Eigen::Vector3d t(g(rng), g(rng), g(rng));
  t = (t - t.dot(m) * m).normalized();
  const Eigen::Vector3d tip_center = m + spec.marker_offset * t;

  std::vector<bool> taken(spec.points, false);
  auto take_nearest = [&](const Eigen::Vector3d& c) {
    std::vector<std::pair<double, int>> by_dist;
    for (int i = 0; i < spec.points; ++i)
      if (!taken[i]) by_dist.emplace_back((x.row(i).transpose() - c).norm(), i);
    std::sort(by_dist.begin(), by_dist.end());
    std::vector<int> out;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int k = 0; k < spec.marker_points; ++k) {
      out.push_back(by_dist[k].second);
      taken[by_dist[k].second] = true;
      mean += x.row(by_dist[k].second).transpose();
    }
    return std::make_pair(out, Eigen::Vector3d(mean / spec.marker_points));
  };
  const auto [base_nodes, base_mean] = take_nearest(m);
  const auto [tip_nodes, tip_mean] = take_nearest(tip_center);
  const Eigen::Vector3d offset = tip_mean - base_mean;

  Matrix flag = Matrix::Zero(spec.points, 1);
  Matrix vec = Matrix::Zero(spec.points, 3);
  for (int i : base_nodes) {
    flag(i, 0) = 1.0;
    vec.row(i) = offset.transpose();
  }
  s.targets.resize(spec.points, 3);
  for (int i = 0; i < spec.points; ++i) {
    const Eigen::Vector3d n = (*s.cloud.normals).row(i).transpose();
    Eigen::Vector3d v = offset - offset.dot(n) * n;
    if (v.norm() < 1e-9) v = offset;
    s.targets.row(i) = v.normalized().transpose();
  }
  s.cloud.normals.reset();
  s.cloud.features.emplace("marker", FeatureBlock(std::move(flag), RepSpec::parse("1x0n")));
  s.cloud.features.emplace("offset", FeatureBlock(std::move(vec), RepSpec::parse("1x1n")));
  return s;
}

void jitter(PointCloud& c, double sigma, Rng& rng) {
  if (sigma <= 0) return;
  std::normal_distribution<double> g(0.0, sigma);
  for (Eigen::Index k = 0; k < c.positions.size(); ++k) c.positions.data()[k] += g(rng);
}

}  // namespace

std::vector<std::string> parse_family_list(const std::string& family) { return family_list(family); }

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.points < 1 || spec.count < 0) throw std::invalid_argument("dataset needs positive point count");
  if (spec.task == TaskKind::normal_regression) family_list(spec.family);
  if (spec.noise < 0) throw std::invalid_argument("noise must be non-negative");
  Dataset d;
  d.spec = spec;
  for (int k = 0; k < spec.count; ++k) {
    Rng rng = split_rng(spec.seed, static_cast<std::uint64_t>(k));
    Sample s;
    if (spec.task == TaskKind::directional_relay) {
      s = relay_sample(spec, rng);
    } else {
      s.family = pick_family(spec, rng, k);
      s.cloud = sample_family(s.family, spec, rng);
      if (spec.task == TaskKind::normal_regression) {
        s.targets = *s.cloud.normals;
      } else {
        const auto& f = shape_families();
        s.label = static_cast<int>(std::find(f.begin(), f.end(), s.family) - f.begin());
      }
    }
    if (spec.pre_rotate) {
      const Orthogonal r = random_orthogonal(rng, Group::O);
      s.cloud = s.cloud.transformed(r, Eigen::Vector3d::Zero());
      if (s.targets.size() > 0) s.targets = s.targets * r.matrix().transpose();
      s.pre_rotation = r;
    }
    jitter(s.cloud, spec.noise, rng);
    d.samples.push_back(std::move(s));
  }
  return d;
}

namespace {

json spec_json(const DatasetSpec& s) {
  return {{"task", to_string(s.task)},
          {"family", s.family},
          {"points", s.points},
          {"count", s.count},
          {"noise", s.noise},
          {"pre_rotate", s.pre_rotate},
          {"torus_major", s.torus_major},
          {"torus_minor", s.torus_minor},
          {"superellipsoid_exponent", s.superellipsoid_exponent},
          {"marker_offset", s.marker_offset},
          {"marker_points", s.marker_points},
          {"seed", s.seed}};
}

DatasetSpec spec_from_json(const json& j) {
  DatasetSpec s;
  s.task = task_kind_from_string(j.at("task").get<std::string>());
  s.family = j.value("family", s.family);
  s.points = j.value("points", s.points);
  s.count = j.value("count", s.count);
  s.noise = j.value("noise", s.noise);
  s.pre_rotate = j.value("pre_rotate", s.pre_rotate);
  s.torus_major = j.value("torus_major", s.torus_major);
  s.torus_minor = j.value("torus_minor", s.torus_minor);
  s.superellipsoid_exponent = j.value("superellipsoid_exponent", s.superellipsoid_exponent);
  s.marker_offset = j.value("marker_offset", s.marker_offset);
  s.marker_points = j.value("marker_points", s.marker_points);
  s.seed = j.value("seed", s.seed);
  return s;
}

std::string sample_name(std::size_t k) {
  std::ostringstream os;
  os << "sample_" << std::setw(4) << std::setfill('0') << k;
  return os.str();
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["spec"] = spec_json(data.spec);
  manifest["samples"] = json::array();
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    const Sample& s = data.samples[k];
    const std::string name = sample_name(k);
    write_point_cloud((fs::path(dir) / (name + ".xyz")).string(), s.cloud);
    json entry{{"cloud", name + ".xyz"}, {"family", s.family}, {"label", s.label}};
    if (s.targets.size() > 0) {
      std::ofstream t(fs::path(dir) / (name + ".targets.txt"));
      t << std::setprecision(17);
      for (Eigen::Index i = 0; i < s.targets.rows(); ++i)
        t << s.targets(i, 0) << ' ' << s.targets(i, 1) << ' ' << s.targets(i, 2) << '\n';
      entry["targets"] = name + ".targets.txt";
    }
    if (s.pre_rotation) {
      std::vector<double> r;
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) r.push_back(s.pre_rotation->matrix()(p, q));
      entry["pre_rotation"] = r;
    }
    manifest["samples"].push_back(std::move(entry));
  }
  std::ofstream out(fs::path(dir) / "dataset.json");
  if (!out) throw std::runtime_error("cannot write dataset manifest in " + dir);
  out << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "dataset.json");
  if (!in) throw std::runtime_error("no dataset.json in " + dir);
  const json manifest = json::parse(in);
  Dataset d;
  d.spec = spec_from_json(manifest.at("spec"));
  for (const auto& e : manifest.at("samples")) {
    Sample s;
    s.cloud = read_point_cloud((fs::path(dir) / e.at("cloud").get<std::string>()).string());
    s.family = e.value("family", std::string());
    s.label = e.value("label", -1);
    if (e.contains("targets")) {
      std::ifstream t(fs::path(dir) / e.at("targets").get<std::string>());
      s.targets.resize(s.cloud.size(), 3);
      for (int i = 0; i < s.cloud.size(); ++i)
        for (int c = 0; c < 3; ++c)
          if (!(t >> s.targets(i, c))) throw std::runtime_error("truncated targets file in " + dir);
    }
    if (e.contains("pre_rotation")) {
      const auto r = e.at("pre_rotation").get<std::vector<double>>();
      Eigen::MatrixXd m(3, 3);
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) m(p, q) = r.at(p * 3 + q);
      s.pre_rotation = Orthogonal::checked(m, 1e-9);
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

SenderRotationFixture make_sender_rotation_fixture(const Orthogonal& sender_rotation) {
  SenderRotationFixture f;
  f.sender_rotation = sender_rotation;
  const Eigen::Vector3d receiver(0, 0, 0), sender(1, 0, 0);
  const std::vector<Eigen::Vector3d> receiver_marks{{-0.2, 0.05, 0.0}, {0.0, -0.3, 0.05}, {0.05, 0.1, 0.25}};
  const std::vector<Eigen::Vector3d> sender_marks{{0.25, 0.05, 0.0}, {0.0, 0.3, 0.1}, {-0.1, 0.0, 0.35}};
  auto build = [&](bool rotate) {
    std::vector<Eigen::Vector3d> pts{receiver, sender};
    for (const auto& m : receiver_marks) pts.push_back(receiver + m);
    for (const auto& m : sender_marks) pts.push_back(sender + (rotate ? Eigen::Vector3d(sender_rotation.matrix() * m) : m));
    PointCloud c(Matrix(static_cast<Eigen::Index>(pts.size()), 3));
    for (std::size_t i = 0; i < pts.size(); ++i) c.positions.row(i) = pts[i].transpose();
    const Graph g = radius_graph(c.positions, f.frame_radius);
    Matrix com = local_centers_of_mass(g, f.frame_radius, 5);
    c.features.emplace("com", FeatureBlock(std::move(com), RepSpec::parse("1x1n")));
    return c;
  };
  f.original = build(false);
  f.rotated = build(true);
  f.message_graph = Graph::from_edges(f.original.positions, {{f.receiver, f.sender}});
  return f;
}

}  // namespace lframes
