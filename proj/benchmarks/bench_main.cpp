#include <benchmark/benchmark.h>

#include "lframes/datasets.hpp"
#include "lframes/mp.hpp"
#include "lframes/train.hpp"

using namespace lframes;

namespace {

void BM_ApplyRep(benchmark::State& state) {
  Rng rng(1);
  const RepSpec spec = RepSpec::parse("16x0n+8x1n+4x2n+2x3n");
  Matrix x = Matrix::Random(state.range(0), spec.width());
  const FeatureBlock f(x, spec);
  const Orthogonal r = random_orthogonal(rng, Group::O);
  for (auto _ : state) benchmark::DoNotOptimize(apply_rep(spec, r, f));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ApplyRep)->Arg(128)->Arg(1024);

void BM_RadiusGraph(benchmark::State& state) {
  Rng rng(2);
  const PointCloud c = sample_sphere(static_cast<int>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(radius_graph(c, 0.3));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RadiusGraph)->Arg(128)->Arg(1024)->Arg(4096);

void BM_LearnedFrames(benchmark::State& state) {
  Rng rng(3);
  const PointCloud c = sample_sphere(static_cast<int>(state.range(0)), rng);
  const Graph g = radius_graph(c, 0.3);
  nn::Mlp phi("phi", {frame_net_input_width(0), 32, 32, 2}, rng);
  LearnedFrameOptions opt;
  opt.cutoff = 0.3;
  for (auto _ : state) benchmark::DoNotOptimize(build_learned_frames(c, g, phi, opt));
}
BENCHMARK(BM_LearnedFrames)->Arg(256)->Arg(1024);

void BM_PipelineStep(benchmark::State& state) {
  const bool tensorial = state.range(0) != 0;
  PipelineConfig cfg = default_pipeline(TaskKind::normal_regression)
                           .with_mode(tensorial ? MessageMode::tensorial : MessageMode::scalar);
  Pipeline model(cfg, 4);
  DatasetSpec ds;
  ds.count = 1;
  const Sample s = generate_dataset(ds).samples[0];
  ForwardOptions opt;
  opt.training = true;
  for (auto _ : state) {
    nn::Tape tape;
    LossEval le = sample_loss(tape, model, s, TaskKind::normal_regression, opt, 0.0);
    tape.backward(le.loss);
    benchmark::DoNotOptimize(le.metric);
  }
  state.SetLabel(tensorial ? "tensorial" : "scalar");
}
BENCHMARK(BM_PipelineStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
