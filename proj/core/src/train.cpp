#include "lframes/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace lframes {

using json = nlohmann::json;

namespace {

constexpr const char* kHiddenRep = "16x0n+4x0p+4x1n+1x1p+1x2n";

LayerSpec layer(LayerType type, const char* rep, double radius = 0.3, double fraction = 1.0, bool refine = false) {
  LayerSpec l;
  l.type = type;
  if (rep) l.rep = RepSpec::parse(rep);
  l.radius = radius;
  l.fraction = fraction;
  l.refine = refine;
  return l;
}

[[noreturn]] void config_fail(const std::string& msg) { throw PipelineConfigError(msg, -1); }

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_fail(std::string("key '") + key + "' has the wrong type");
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) config_fail(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      config_fail("unknown key '" + key + "' in " + where);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) { return split_rng(seed, stream)(); }

}  // namespace

PipelineConfig default_pipeline(TaskKind task) {
  PipelineConfig c;
  c.frames.radius = 0.6;
  c.frames.hidden = {16};
  c.refine_hidden = {16};
  c.radial_k = 8;
  if (task == TaskKind::shape_classification) {
    c.rho_out = RepSpec::parse("3x0n");
    c.layers = {layer(LayerType::encoder, kHiddenRep, 0.35, 0.5, true), layer(LayerType::encoder, kHiddenRep, 0.8, 0.5, true),
                layer(LayerType::pool, kHiddenRep, 2.5), layer(LayerType::output, nullptr)};
  } else if (task == TaskKind::directional_relay) {
    // marker flag and offset vector; the coarse level spans the whole unit sphere
    c.rho_in = RepSpec::parse("1x0n+1x1n");
    c.rho_out = RepSpec::parse("1x1n");
    c.normalize_output = true;
    c.layers = {layer(LayerType::encoder, kHiddenRep, 0.5, 0.5, true), layer(LayerType::encoder, kHiddenRep, 2.1, 0.25, true),
                layer(LayerType::decoder, kHiddenRep), layer(LayerType::decoder, kHiddenRep),
                layer(LayerType::output, nullptr)};
  } else {
    c.rho_out = RepSpec::parse("1x1n");
    c.normalize_output = true;
    c.layers = {layer(LayerType::encoder, kHiddenRep, 0.35, 0.5, true), layer(LayerType::encoder, kHiddenRep, 0.8, 0.5, true),
                layer(LayerType::decoder, kHiddenRep), layer(LayerType::decoder, kHiddenRep),
                layer(LayerType::output, nullptr)};
  }
  for (auto& l : c.layers) l.hidden = {32};
  c.validate();
  return c;
}

TaskSpec TaskSpec::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    config_fail(std::string("malformed JSON: ") + e.what());
  }
  TaskSpec t;
  if (j.is_object() && j.contains("layers")) {
    t.pipeline = PipelineConfig::from_json_string(text);
    return t;
  }
  check_keys(j, {"task", "seed", "dataset", "pipeline", "train"}, "task spec");
  try {
    t.data.task = task_kind_from_string(field<std::string>(j, "task", "normal-regression"));
  } catch (const PipelineConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    config_fail(e.what());
  }
  t.seed = field<std::uint64_t>(j, "seed", 0);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d,
               {"family", "points", "count", "eval_count", "noise", "pre_rotate", "torus_major", "torus_minor",
                "superellipsoid_exponent", "marker_offset", "marker_points"},
               "dataset");
    t.data.family = field<std::string>(d, "family", t.data.family);
    t.data.points = field<int>(d, "points", t.data.points);
    t.data.count = field<int>(d, "count", t.data.count);
    t.eval_count = field<int>(d, "eval_count", t.eval_count);
    t.data.noise = field<double>(d, "noise", t.data.noise);
    t.data.pre_rotate = field<bool>(d, "pre_rotate", t.data.pre_rotate);
    t.data.torus_major = field<double>(d, "torus_major", t.data.torus_major);
    t.data.torus_minor = field<double>(d, "torus_minor", t.data.torus_minor);
    t.data.superellipsoid_exponent = field<double>(d, "superellipsoid_exponent", t.data.superellipsoid_exponent);
    t.data.marker_offset = field<double>(d, "marker_offset", t.data.marker_offset);
    t.data.marker_points = field<int>(d, "marker_points", t.data.marker_points);
    try {
      parse_family_list(t.data.family);
    } catch (const std::invalid_argument& e) {
      config_fail(e.what());
    }
    if (t.data.points < 1 || t.data.count < 1 || t.eval_count < 0)
      config_fail("dataset sizes must be positive");
    if (t.data.noise < 0) config_fail("noise must be non-negative");
  }
  t.pipeline = j.contains("pipeline") ? PipelineConfig::from_json_string(j.at("pipeline").dump())
                                      : default_pipeline(t.data.task);
  if (j.contains("train")) {
    const json& r = j.at("train");
    check_keys(r, {"steps", "lr", "warmup", "clip", "weight_decay", "label_smoothing", "eval_every", "augment"}, "train");
    t.train.steps = field<long>(r, "steps", t.train.steps);
    t.train.lr = field<double>(r, "lr", t.train.lr);
    t.train.warmup = field<long>(r, "warmup", t.train.warmup);
    t.train.clip = field<double>(r, "clip", t.train.clip);
    t.train.weight_decay = field<double>(r, "weight_decay", t.train.weight_decay);
    t.train.label_smoothing = field<double>(r, "label_smoothing", t.train.label_smoothing);
    t.train.eval_every = field<long>(r, "eval_every", t.train.eval_every);
    t.train.augment = field<bool>(r, "augment", t.train.augment);
    if (t.train.steps < 0 || t.train.warmup < 0 || !(t.train.lr > 0) || !(t.train.clip > 0))
      config_fail("invalid training hyperparameters");
  }
  const bool classify = t.data.task == TaskKind::shape_classification;
  if (classify != t.pipeline.rho_out.is_invariant())
    config_fail(classify ? "classification needs an invariant rho_out" : "regression tasks need rho_out 1x1n");
  if (!classify && !(t.pipeline.rho_out == RepSpec::parse("1x1n"))) config_fail("regression tasks need rho_out 1x1n");
  return t;
}

TaskSpec TaskSpec::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::string TaskSpec::to_json_string() const {
  json j;
  j["task"] = to_string(data.task);
  j["seed"] = seed;
  j["dataset"] = {{"family", data.family},
                  {"points", data.points},
                  {"count", data.count},
                  {"eval_count", eval_count},
                  {"noise", data.noise},
                  {"pre_rotate", data.pre_rotate},
                  {"torus_major", data.torus_major},
                  {"torus_minor", data.torus_minor},
                  {"superellipsoid_exponent", data.superellipsoid_exponent},
                  {"marker_offset", data.marker_offset},
                  {"marker_points", data.marker_points}};
  j["pipeline"] = json::parse(pipeline.to_json_string());
  j["train"] = {{"steps", train.steps},
                {"lr", train.lr},
                {"warmup", train.warmup},
                {"clip", train.clip},
                {"weight_decay", train.weight_decay},
                {"label_smoothing", train.label_smoothing},
                {"eval_every", train.eval_every},
                {"augment", train.augment}};
  return j.dump(2);
}

DatasetSpec TaskSpec::train_data() const {
  DatasetSpec d = data;
  d.seed = derive(seed, 1);
  return d;
}

DatasetSpec TaskSpec::eval_data() const {
  DatasetSpec d = data;
  d.seed = derive(seed, 2);
  d.count = eval_count;
  return d;
}

LossEval sample_loss(nn::Tape& tape, Pipeline& model, const Sample& sample, TaskKind task,
                     const ForwardOptions& opt, double label_smoothing) {
  PipelineOutput out = model.forward(tape, sample.cloud, opt);
  LossEval r;
  if (task == TaskKind::shape_classification) {
    r.loss = nn::cross_entropy(out.global, {sample.label}, label_smoothing);
    Eigen::Index best = 0;
    out.global.value().row(0).maxCoeff(&best);
    r.metric = best == sample.label ? 1.0 : 0.0;
    return r;
  }
  nn::Var pred = out.global;
  if (!model.config().normalize_output)
    pred = nn::mul_col(pred, nn::reciprocal(nn::add_scalar(nn::row_norm(pred), 1e-12)));
  nn::Var target = tape.constant(sample.targets);
  r.loss = nn::l1_loss(pred, target);
  r.metric = nn::cosine_similarity(pred, target).scalar();
  return r;
}

EvalResult evaluate(Pipeline& model, const Dataset& data, std::uint64_t frame_seed, double label_smoothing) {
  EvalResult r;
  if (data.samples.empty()) return r;
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    nn::Tape tape;
    ForwardOptions fo;
    fo.frame_seed = derive(frame_seed, k);
    LossEval le = sample_loss(tape, model, data.samples[k], data.spec.task, fo, label_smoothing);
    r.loss += le.loss.scalar();
    r.metric += le.metric;
  }
  r.loss /= static_cast<double>(data.samples.size());
  r.metric /= static_cast<double>(data.samples.size());
  return r;
}

std::uint64_t step_frame_seed(std::uint64_t seed, long step) {
  return derive(seed, 1000 + static_cast<std::uint64_t>(step));
}

TrainResult train(Pipeline& model, const Dataset& train_set, const Dataset& eval_set, const TrainConfig& cfg,
                  std::uint64_t seed) {
  if (train_set.samples.empty()) throw std::invalid_argument("training set is empty");
  const auto t0 = std::chrono::steady_clock::now();
  const TaskKind task = train_set.spec.task;
  const std::uint64_t eval_seed = derive(seed, 7);
  std::vector<nn::Parameter*> params = model.parameters();
  nn::AdamWConfig ac;
  ac.weight_decay = cfg.weight_decay;
  nn::AdamW opt(params, ac);
  Rng order = split_rng(seed, 8);
  std::uniform_int_distribution<std::size_t> pick(0, train_set.samples.size() - 1);

  TrainResult res;
  res.parameters = model.parameter_count();
  {
    const EvalResult e = evaluate(model, eval_set, eval_seed, cfg.label_smoothing);
    MetricRow row;
    row.loss = e.loss;
    row.metric = e.metric;
    row.eval_metric = e.metric;
    res.history.push_back(row);
    res.final_metric = e.metric;
    res.final_loss = e.loss;
  }
  for (long step = 0; step < cfg.steps; ++step) {
    const Sample& s = train_set.samples[pick(order)];
    nn::Tape tape;
    ForwardOptions fo;
    fo.training = true;
    fo.frame_seed = step_frame_seed(seed, step);
    LossEval le = sample_loss(tape, model, s, task, fo, cfg.label_smoothing);
    const double loss = le.loss.scalar();
    if (!std::isfinite(loss))
      throw DivergenceError("loss became non-finite at step " + std::to_string(step + 1));
    opt.zero_grad();
    tape.backward(le.loss);
    const double gn = nn::clip_grad_norm(params, cfg.clip);
    if (!std::isfinite(gn))
      throw DivergenceError("gradient became non-finite at step " + std::to_string(step + 1));
    const double lr = nn::cosine_lr_schedule(step, cfg.steps, cfg.warmup, cfg.lr);
    opt.step(lr);

    MetricRow row;
    row.step = step + 1;
    row.loss = loss;
    row.metric = le.metric;
    row.lr = lr;
    row.grad_norm = gn;
    const bool last = step + 1 == cfg.steps;
    if (last || (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0)) {
      const EvalResult e = evaluate(model, eval_set, eval_seed, cfg.label_smoothing);
      row.eval_metric = e.metric;
      res.final_metric = e.metric;
      res.final_loss = e.loss;
    }
    res.history.push_back(row);
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

TrainResult run_task(const TaskSpec& spec, Pipeline* model_out) {
  PipelineConfig pc = spec.pipeline;
  if (spec.train.augment) pc = pc.with_frames(FrameProvenance::constant);
  Pipeline model(pc, derive(spec.seed, 3));
  const Dataset train_set = generate_dataset(spec.train_data());
  const Dataset eval_set = generate_dataset(spec.eval_data());
  TrainResult r = train(model, train_set, eval_set, spec.train, derive(spec.seed, 4));
  if (model_out) *model_out = std::move(model);
  return r;
}

AblationGrid full_ablation_grid() {
  return {{MessageMode::tensorial, FrameProvenance::learned},
          {MessageMode::tensorial, FrameProvenance::random},
          {MessageMode::scalar, FrameProvenance::learned},
          {MessageMode::scalar, FrameProvenance::random}};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<AblationCell> ablation_matrix(const TaskSpec& spec, const std::vector<std::uint64_t>& seeds,
                                          const AblationGrid& grid) {
  std::vector<AblationCell> cells;
  for (const auto& [mode, frames] : grid) {
    AblationCell cell;
    cell.mode = mode;
    cell.frames = frames;
    for (std::uint64_t s : seeds) {
      TaskSpec t = spec;
      t.seed = s;
      t.pipeline = spec.pipeline.with_mode(mode).with_frames(frames);
      Pipeline model(t.pipeline, 0);
      const TrainResult r = run_task(t, &model);
      cell.seeds.push_back(s);
      cell.metrics.push_back(r.final_metric);
      cell.parameters = r.parameters;
      cell.frame_net_parameters = model.frame_net_parameter_count();
    }
    cell.median = median(cell.metrics);
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::vector<SweepRow> data_efficiency_sweep(const TaskSpec& spec, const std::vector<double>& fractions) {
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    if (!(f > 0 && f <= 1)) throw std::invalid_argument("sweep fractions must lie in (0, 1]");
    for (int augmented = 0; augmented < 2; ++augmented) {
      TaskSpec t = spec;
      t.train.augment = augmented == 1;
      PipelineConfig pc = t.pipeline;
      if (t.train.augment) pc = pc.with_frames(FrameProvenance::constant);
      Pipeline model(pc, derive(t.seed, 3));
      Dataset train_set = generate_dataset(t.train_data());
      const auto keep = static_cast<std::size_t>(std::ceil(f * static_cast<double>(train_set.samples.size())));
      train_set.samples.resize(std::max<std::size_t>(keep, 1));
      const Dataset eval_set = generate_dataset(t.eval_data());
      const TrainResult r = train(model, train_set, eval_set, t.train, derive(t.seed, 4));
      rows.push_back({f, augmented ? "augmented" : "equivariant", 1.0 - r.final_metric});
    }
  }
  return rows;
}

}  // namespace lframes
