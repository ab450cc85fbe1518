#include <benchmark/benchmark.h>

#include "poseguide/flow_sampling.hpp"
#include "poseguide/guidance.hpp"
#include "poseguide/motion_field.hpp"
#include "poseguide/rng.hpp"
#include "poseguide/synthetic.hpp"
#include "poseguide/trajectory.hpp"

using namespace poseguide;

namespace {

TrajectoryMap bench_trajectory(int keypoints, int driven, int size, std::uint64_t seed) {
  Rng rng(seed);
  TrajectoryMap traj;
  traj.keypoint_count = keypoints;
  traj.frame_count = driven + 1;
  const std::size_t total = static_cast<std::size_t>(keypoints) * traj.frame_count;
  traj.x.resize(total);
  traj.y.resize(total);
  traj.valid.assign(total, 1);
  for (std::size_t i = 0; i < total; ++i) {
    traj.x[i] = rng.uniform(2.0, size - 2.0);
    traj.y[i] = rng.uniform(2.0, size - 2.0);
  }
  return traj;
}

void BM_RasterizeSparseField(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const TrajectoryMap traj = bench_trajectory(16, 4, size, 1);
  const RefDisplacement disp = reference_displacements(traj);
  for (auto _ : state) {
    MotionFieldStack field = rasterize_sparse_field(disp, traj, size, size, 3.0);
    benchmark::DoNotOptimize(field.data());
  }
}
BENCHMARK(BM_RasterizeSparseField)->Arg(64)->Arg(128)->Arg(256);

SparseFlow unique_constraints(int size, int count, Rng& rng) {
  SparseFlow sf;
  sf.width = size;
  sf.height = size;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(size) * size, 0);
  while (static_cast<int>(sf.points.size()) < count) {
    const int x = rng.uniform_int(0, size - 1), y = rng.uniform_int(0, size - 1);
    std::uint8_t& s = seen[static_cast<std::size_t>(y) * size + x];
    if (s) continue;
    s = 1;
    sf.points.push_back({x, y, static_cast<float>(rng.uniform(-5.0, 5.0)),
                         static_cast<float>(rng.uniform(-5.0, 5.0))});
  }
  return sf;
}

void BM_PropagateDense(benchmark::State& state) {
  // Representative input: the smooth synthetic reference scene.
  const int size = static_cast<int>(state.range(0));
  SyntheticConfig scene;
  scene.image_size = size;
  const ImageD img = make_synthetic_sequence(scene, 2).reference;
  Rng rng(2);
  const SparseFlow sf = unique_constraints(size, 12, rng);
  for (auto _ : state) {
    MotionFieldStack out = propagate_dense(img, sf, {});
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_PropagateDense)->Arg(32)->Arg(64)->Arg(128);

void BM_PropagateDenseNoiseWorstCase(benchmark::State& state) {
  // Pure-noise image at small beta: a near-disconnected weight graph.
  // The solver runs to its iteration cap and returns the best iterate,
  // so this measures the budget, not convergence.
  const int size = static_cast<int>(state.range(0));
  Rng rng(2);
  ImageD img(3, size, size);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform();
  const SparseFlow sf = unique_constraints(size, 12, rng);
  for (auto _ : state) {
    MotionFieldStack out = propagate_dense(img, sf, {});
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_PropagateDenseNoiseWorstCase)->Arg(16)->Arg(32);

void BM_WatershedSampling(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  MotionFieldStack flow(1, size, size);
  for (int y = size / 4; y < 3 * size / 4; ++y)
    for (int x = size / 4; x < 3 * size / 4; ++x) flow.at(0, 0, y, x) = 5.0f;
  for (auto _ : state) {
    SparseFlow samples = sample_sparse_flow(flow, 0, 1.0, 5);
    benchmark::DoNotOptimize(samples.points.data());
  }
}
BENCHMARK(BM_WatershedSampling)->Arg(64)->Arg(128)->Arg(256);

void BM_ControlNetForward(benchmark::State& state) {
  GuidanceConfig cfg;
  GuidancePipeline pipeline(cfg, 7);
  Rng rng(3);
  const int latent = cfg.latent_size();
  nn::Tensor z_t({1, cfg.latent_channels, latent, latent});
  for (std::size_t i = 0; i < z_t.size(); ++i) z_t[i] = rng.normal();
  nn::Tensor f_m({1, cfg.latent_channels, latent, latent});
  std::vector<nn::Tensor> f_c;
  for (int l = 0; l < cfg.levels(); ++l)
    f_c.emplace_back(
        std::vector<int>{1, cfg.correspondence_dim, cfg.level_size(l), cfg.level_size(l)});
  for (auto _ : state) {
    GuidanceResiduals r = pipeline.controlnet_forward(z_t, f_m, f_c, {500});
    benchmark::DoNotOptimize(r.middle.data());
  }
}
BENCHMARK(BM_ControlNetForward);

void BM_TrainingStep(benchmark::State& state) {
  GuidanceConfig cfg;
  GuidancePipeline pipeline(cfg, 7);
  const ToyDataset data = build_toy_dataset(cfg, 1, 11);
  Rng rng(13);
  nn::SgdMomentum opt(1e-3, 0.9);
  for (auto _ : state) {
    TrainBatch batch;
    batch.z0 = data.items[0].z0;
    batch.f_s = data.items[0].f_s;
    batch.f_d = data.items[0].f_d;
    batch.f_c = data.items[0].f_c;
    batch.t.assign(batch.z0.dim(0), 0);
    for (int& t : batch.t) t = rng.uniform_int(1, cfg.timesteps);
    batch.eps = nn::Tensor::zeros_like(batch.z0);
    for (std::size_t i = 0; i < batch.eps.size(); ++i) batch.eps[i] = rng.normal();
    benchmark::DoNotOptimize(training_step(pipeline, batch, opt));
  }
}
BENCHMARK(BM_TrainingStep);

}  // namespace

int main(int argc, char** argv) {
  ::benchmark::Initialize(&argc, argv);
  if (::benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  ::benchmark::RunSpecifiedBenchmarks();
  ::benchmark::Shutdown();
  return 0;
}
