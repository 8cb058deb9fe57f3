#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lframes/report.hpp"
#include "lframes/train.hpp"
#include "test_util.hpp"

namespace lframes {
namespace {

using nlohmann::json;

TaskSpec tiny_spec(TaskKind task, long steps) {
  TaskSpec s;
  s.data.task = task;
  s.data.points = 64;
  s.data.count = 4;
  s.eval_count = 2;
  s.pipeline = default_pipeline(task);
  s.train.steps = steps;
  s.train.warmup = 1;
  s.train.eval_every = 2;
  s.seed = 5;
  return s;
}

TEST(Datasets, DeterministicWithUnitNormals) {
  DatasetSpec ds;
  ds.family = "sphere,torus,superellipsoid";
  ds.count = 6;
  ds.points = 80;
  ds.seed = 3;
  const Dataset a = generate_dataset(ds), b = generate_dataset(ds);
  ASSERT_EQ(a.samples.size(), 6u);
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    EXPECT_EQ(a.samples[k].cloud.positions, b.samples[k].cloud.positions);
    EXPECT_EQ(a.samples[k].family, b.samples[k].family);
    const Matrix& t = a.samples[k].targets;
    ASSERT_EQ(t.rows(), 80);
    EXPECT_LT((t.rowwise().norm().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
  ds.seed = 4;
  EXPECT_NE(generate_dataset(ds).samples[0].cloud.positions, a.samples[0].cloud.positions);
}

TEST(Datasets, TorusNormalIsAnalytic) {
  const double major = 1.0, minor = 0.3;
  for (double theta : {0.0, 0.7, 2.0, 4.1})
    for (double phi : {0.0, 1.3, 3.0, 5.5}) {
      const Eigen::Vector3d p = torus_point(theta, phi, major, minor);
      const Eigen::Vector3d n = torus_normal(p, major);
      EXPECT_NEAR(n.norm(), 1.0, 1e-12);
      const Eigen::Vector3d ring(major * std::cos(phi), major * std::sin(phi), 0.0);
      EXPECT_LT((n - (p - ring) / minor).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Datasets, FamilyListsAndErrors) {
  EXPECT_EQ(parse_family_list("sphere,torus"), (std::vector<std::string>{"sphere", "torus"}));
  EXPECT_EQ(parse_family_list("mixed").size(), 3u);
  EXPECT_THROW(parse_family_list("cube"), std::invalid_argument);
}

TEST(Datasets, RelayTargetsAreUnitTangents) {
  DatasetSpec ds;
  ds.task = TaskKind::directional_relay;
  ds.count = 4;
  ds.seed = 2;
  const Dataset d = generate_dataset(ds);
  for (const Sample& s : d.samples) {
    ASSERT_FALSE(s.cloud.normals.has_value());  // ground truth stays out of the input
    // Noise-free unit sphere: the normal is the position.
    const Matrix n = s.cloud.positions.rowwise().normalized();
    EXPECT_LT((s.targets.rowwise().norm().array() - 1.0).abs().maxCoeff(), 1e-12);
    const FeatureBlock& marker = s.cloud.features.at("marker");
    const FeatureBlock& offset = s.cloud.features.at("offset");
    EXPECT_EQ(marker.values.sum(), ds.marker_points);
    for (int i = 0; i < s.cloud.size(); ++i) {
      EXPECT_LT(std::abs(s.targets.row(i).dot(n.row(i))), 1e-9);
      if (marker.values(i, 0) == 0.0) EXPECT_EQ(offset.values.row(i).norm(), 0.0);
    }
  }
  ds.marker_points = 0;
  EXPECT_THROW(generate_dataset(ds), std::invalid_argument);
}

TEST(Datasets, WriteReadRoundTrip) {
  DatasetSpec ds;
  ds.count = 2;
  ds.points = 20;
  const Dataset d = generate_dataset(ds);
  const auto dir = std::filesystem::temp_directory_path() / "lframes_ds_test";
  std::filesystem::remove_all(dir);
  write_dataset(dir.string(), d);
  const Dataset r = read_dataset(dir.string());
  ASSERT_EQ(r.samples.size(), 2u);
  EXPECT_LT(max_abs_diff(r.samples[1].cloud.positions, d.samples[1].cloud.positions), 1e-15);
  EXPECT_LT(max_abs_diff(r.samples[1].targets, d.samples[1].targets), 1e-15);
  std::filesystem::remove_all(dir);
}

TEST(Train, ZeroStepsEchoesInitialEvaluation) {
  const TaskSpec s = tiny_spec(TaskKind::normal_regression, 0);
  Pipeline model(s.pipeline, 0);
  const TrainResult r = run_task(s, &model);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].step, 0);
  ASSERT_TRUE(r.history[0].eval_metric.has_value());
  EXPECT_EQ(*r.history[0].eval_metric, r.final_metric);
  Pipeline fresh(s.pipeline, 0);
  const TrainResult again = run_task(s, &fresh);
  EXPECT_EQ(again.final_metric, r.final_metric);
}

TEST(Train, DeterministicAndRecordsEvalRows) {
  const TaskSpec s = tiny_spec(TaskKind::normal_regression, 4);
  const TrainResult a = run_task(s), b = run_task(s);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    EXPECT_EQ(a.history[k].loss, b.history[k].loss);
    EXPECT_EQ(a.history[k].eval_metric, b.history[k].eval_metric);
  }
  int evals = 0;
  for (const auto& row : a.history) evals += row.eval_metric.has_value();
  EXPECT_GE(evals, 3);  // step 0, 2 and 4
  EXPECT_EQ(a.history.back().step, 4);
  const std::string csv = metrics_csv(a.history);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,loss,metric,eval_metric,lr,grad_norm");
}

TEST(Train, ScheduleFrameSeedsDiffer) {
  EXPECT_NE(step_frame_seed(1, 0), step_frame_seed(1, 1));
  EXPECT_EQ(step_frame_seed(1, 3), step_frame_seed(1, 3));
}

TEST(TaskSpec, JsonRoundTripAndErrors) {
  const TaskSpec s = tiny_spec(TaskKind::directional_relay, 7);
  const TaskSpec r = TaskSpec::from_json_string(s.to_json_string());
  EXPECT_EQ(r.to_json_string(), s.to_json_string());
  EXPECT_THROW(TaskSpec::from_json_string(R"({"task":"nope"})"), PipelineConfigError);
  EXPECT_THROW(TaskSpec::from_json_string(R"({"train":{"steps":"x"}})"), PipelineConfigError);
}

TEST(Ablation, ParameterGapIsFrameNetwork) {
  const TaskSpec s = tiny_spec(TaskKind::normal_regression, 1);
  const auto cells = ablation_matrix(s, {0});
  ASSERT_EQ(cells.size(), 4u);
  for (const auto& learned : cells) {
    if (learned.frames != FrameProvenance::learned) continue;
    for (const auto& random : cells)
      if (random.frames == FrameProvenance::random && random.mode == learned.mode) {
        EXPECT_GT(learned.frame_net_parameters, 0u);
        EXPECT_EQ(learned.parameters - random.parameters, learned.frame_net_parameters);
      }
  }
  const std::string csv = ablation_csv(cells);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Sweep, RowsPerFractionAndMode) {
  const TaskSpec s = tiny_spec(TaskKind::normal_regression, 1);
  const auto rows = data_efficiency_sweep(s, {0.5, 1.0});
  ASSERT_EQ(rows.size(), 4u);
  std::istringstream csv(sweep_csv(rows));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "fraction,mode,final_error");
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
}

TEST(Report, JsonCarriesStatusAndMetrics) {
  RunReport r;
  r.command = "train";
  r.seed = 9;
  r.config_json = tiny_spec(TaskKind::normal_regression, 1).to_json_string();
  MetricRow row;
  row.step = 1;
  row.eval_metric = -0.25;
  r.metrics.push_back(row);
  r.summary["final_metric"] = -0.25;
  const json j = json::parse(report_to_json(r));
  EXPECT_EQ(j.at("status"), "ok");
  EXPECT_EQ(j.at("seed"), 9);
  EXPECT_EQ(j.at("metrics").at(0).at("eval_metric"), -0.25);
  EXPECT_TRUE(j.at("config").is_object());
}

TEST(Report, FrameSetJsonRoundTrip) {
  Rng rng(1);
  FrameSet f = build_random_frames(5, rng, Group::O);
  f.provenance = FrameProvenance::random;
  const FrameSet r = frame_set_from_json(frame_set_to_json(f));
  EXPECT_EQ(r.provenance, FrameProvenance::random);
  EXPECT_LT(max_abs_diff(r.rows, f.rows), 1e-15);
}

TEST(Report, AtomicWriteReplaces) {
  const auto path = std::filesystem::temp_directory_path() / "lframes_atomic.txt";
  write_text_atomic(path.string(), "a");
  write_text_atomic(path.string(), "b");
  std::ifstream in(path);
  std::string s;
  in >> s;
  EXPECT_EQ(s, "b");
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);
}

TEST(Audit, StabilityZeroNoiseIsExact) {
  DatasetSpec ds;
  ds.count = 1;
  const Dataset d = generate_dataset(ds);
  Pipeline p(default_pipeline(TaskKind::normal_regression), 1);
  const auto rows = audit_frame_stability(p, d, {0.0, 0.05}, FrameProvenance::learned, 3);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_LT(rows[0].frobenius, 1e-12);
  for (double c : rows[0].axis_cosine) EXPECT_NEAR(c, 1.0, 1e-12);
  EXPECT_GT(rows[1].frobenius, 0.0);
}

}  // namespace
}  // namespace lframes
