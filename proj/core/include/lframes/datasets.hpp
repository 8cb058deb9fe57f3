// Synthetic tasks with analytic ground truth.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lframes/geometry.hpp"
#include "lframes/reps.hpp"

namespace lframes {

enum class TaskKind { normal_regression, directional_relay, shape_classification };

const char* to_string(TaskKind t);
TaskKind task_kind_from_string(const std::string& s);

struct DatasetSpec {
  TaskKind task = TaskKind::normal_regression;
  /// sphere, torus, superellipsoid, a comma-separated list of these, or mixed
  /// (all three); lists draw a random family per sample.
  std::string family = "sphere";
  int points = 128;
  int count = 32;
  double noise = 0.0;
  bool pre_rotate = true;
  double torus_major = 1.0;
  double torus_minor = 0.3;
  double superellipsoid_exponent = 4.0;
  /// Relay: distance from the base cluster center to the tip cluster center,
  /// and points per cluster.
  double marker_offset = 0.5;
  int marker_points = 3;
  std::uint64_t seed = 0;
};

struct Sample {
  PointCloud cloud;
  /// Per-node regression targets in global coordinates (N x 3); empty for
  /// classification.
  Matrix targets;
  int label = -1;
  std::string family;
  std::optional<Orthogonal> pre_rotation;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> samples;
};

/// Families usable for shape sampling, in label order.
const std::vector<std::string>& shape_families();

/// Expands a family field into family names; throws std::invalid_argument.
std::vector<std::string> parse_family_list(const std::string& family);

/// Surface samples with analytic unit normals (stored as cloud.normals).
PointCloud sample_sphere(int n, Rng& rng, double radius = 1.0);
PointCloud sample_torus(int n, Rng& rng, double major = 1.0, double minor = 0.3);
PointCloud sample_superellipsoid(int n, Rng& rng, double exponent = 4.0);

/// Unit normal of the torus implicit surface (sqrt(x^2+y^2) - R)^2 + z^2 = r^2.
Eigen::Vector3d torus_normal(const Eigen::Vector3d& p, double major);
/// Torus point at tube angle theta and axis angle phi.
Eigen::Vector3d torus_point(double theta, double phi, double major, double minor);

/// Samples for spec.task, fully determined by spec.seed.
Dataset generate_dataset(const DatasetSpec& spec);

/// Writes sample_XXXX.xyz (+ sidecar) and sample_XXXX.targets.txt files plus a
/// dataset.json manifest into `dir`.
void write_dataset(const std::string& dir, const Dataset& data);
Dataset read_dataset(const std::string& dir);

/// Two clouds that differ only by a rotation of the sender's marker points
/// about the sender. Node 0 is the receiver, node 1 the sender; the single
/// message edge runs 1 -> 0. Each node carries a "com" 1x1n feature holding its
/// envelope-weighted local center of mass.
struct SenderRotationFixture {
  PointCloud original;
  PointCloud rotated;
  Graph message_graph;
  Orthogonal sender_rotation;
  double frame_radius = 0.5;
  int receiver = 0;
  int sender = 1;
};

SenderRotationFixture make_sender_rotation_fixture(const Orthogonal& sender_rotation);

}  // namespace lframes
