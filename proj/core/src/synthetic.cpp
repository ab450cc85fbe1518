#include "poseguide/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "poseguide/correspondence.hpp"
#include "poseguide/trajectory.hpp"

namespace poseguide {

namespace {

constexpr double kTau = 6.28318530717958647692;

struct Disk {
  double cx, cy, radius, angle;
};

ImageD render_scene(int size, const double bg[3][3], const Disk& disk, const double color[3]) {
  ImageD img(3, size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double fx = static_cast<double>(x) / size;
      const double fy = static_cast<double>(y) / size;
      const double d = std::hypot(x - disk.cx, y - disk.cy);
      const double alpha = std::clamp((disk.radius - d) / 1.5, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double bgv = bg[c][0] + bg[c][1] * fx + bg[c][2] * fy;
        img.at(c, y, x) = std::clamp(bgv + alpha * (color[c] - bgv), 0.0, 1.0);
      }
    }
  return img;
}

}  // namespace

SyntheticSequence make_synthetic_sequence(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.image_size < 16) throw ParamError("synthetic scenes need image_size >= 16");
  if (cfg.driven_frames < 1) throw ParamError("synthetic scenes need at least one driven frame");
  if (cfg.keypoints < 1) throw ParamError("synthetic scenes need at least one keypoint");

  Rng rng(seed);
  const int size = cfg.image_size;

  double bg[3][3];
  for (auto& row : bg) {
    row[0] = rng.uniform(0.15, 0.4);
    row[1] = rng.uniform(-0.1, 0.1);
    row[2] = rng.uniform(-0.1, 0.1);
  }
  double color[3];
  for (double& c : color) c = rng.uniform(0.6, 0.95);

  Disk disk;
  disk.radius = size / 6.0 + rng.uniform(-1.0, 1.0);
  disk.cx = rng.uniform(size * 0.35, size * 0.65);
  disk.cy = rng.uniform(size * 0.35, size * 0.65);
  disk.angle = rng.uniform(0.0, kTau);

  const double step_vx = rng.uniform(-2.5, 2.5);
  const double step_vy = rng.uniform(-2.5, 2.5);
  const double step_rot = rng.uniform(-0.2, 0.2);

  auto keypoints_of = [&](const Disk& d) {
    std::vector<Keypoint> kps;
    kps.push_back({d.cx, d.cy, 1.0});
    const int ring = cfg.keypoints - 1;
    for (int k = 0; k < ring; ++k) {
      const double a = d.angle + kTau * k / std::max(ring, 1);
      kps.push_back({d.cx + 0.6 * d.radius * std::cos(a),
                     d.cy + 0.6 * d.radius * std::sin(a), 1.0});
    }
    kps.resize(cfg.keypoints);
    return kps;
  };

  SyntheticSequence seq;
  seq.poses.width = size;
  seq.poses.height = size;
  seq.poses.keypoint_count = cfg.keypoints;
  seq.poses.frames.push_back({0, keypoints_of(disk)});
  seq.reference = render_scene(size, bg, disk, color);

  Disk current = disk;
  for (int n = 1; n <= cfg.driven_frames; ++n) {
    current.cx = std::clamp(current.cx + step_vx + rng.uniform(-0.5, 0.5), disk.radius,
                            size - disk.radius);
    current.cy = std::clamp(current.cy + step_vy + rng.uniform(-0.5, 0.5), disk.radius,
                            size - disk.radius);
    current.angle += step_rot;
    seq.poses.frames.push_back({n, keypoints_of(current)});
    seq.frames.push_back(render_scene(size, bg, current, color));
  }
  seq.poses.validate();
  return seq;
}

ToyDataset build_toy_dataset(const GuidanceConfig& cfg, int sequences, std::uint64_t seed) {
  cfg.validate();
  if (sequences < 1) throw ParamError("toy dataset needs at least one sequence");

  Rng master(seed);
  ToyDataset data;
  SyntheticConfig scene_cfg;
  scene_cfg.image_size = cfg.image_size;

  for (int s = 0; s < sequences; ++s) {
    const std::uint64_t seq_seed = master.next_u64();
    const SyntheticSequence seq = make_synthetic_sequence(scene_cfg, seq_seed);
    const TrajectoryMap traj = build_trajectory(seq.poses, 0.3);
    const RefDisplacement ref_disp = reference_displacements(traj);

    const MotionFieldStack f_s =
        rasterize_sparse_field(ref_disp, traj, cfg.image_size, cfg.image_size, 3.0);
    const MotionFieldStack f_d = dense_field_stack(seq.reference, ref_disp, traj, {});

    SyntheticInjectiveProvider provider(cfg.correspondence_dim, cfg.image_size / 4,
                                        cfg.image_size / 4, master.next_u64());
    const FeatureMap features = provider.make(cfg.image_size, cfg.image_size);
    const PointEmbeddings emb = extract_point_embeddings(features, traj);

    ToyDataset::Item item;
    item.f_s = stack_to_tensor(f_s);
    item.f_d = stack_to_tensor(f_d);
    for (int l = 0; l < cfg.levels(); ++l) {
      const int level = cfg.level_size(l);
      item.f_c.push_back(correspondence_to_tensor(
          rescale_correspondence(emb, traj, level, level, cfg.image_size, cfg.image_size)));
    }

    const int n_frames = scene_cfg.driven_frames;
    const int latent = cfg.latent_size();
    item.z0 = nn::Tensor({n_frames, 4, latent, latent});
    for (int n = 0; n < n_frames; ++n) {
      const nn::Tensor z = encode_latent(seq.frames[n], cfg.latent_down);
      for (int c = 0; c < 4; ++c)
        for (int y = 0; y < latent; ++y)
          for (int x = 0; x < latent; ++x) item.z0.at4(n, c, y, x) = z.at4(0, c, y, x);
    }
    data.items.push_back(std::move(item));
  }
  return data;
}

namespace {

double eval_loss(const GuidancePipeline& pipeline, const ToyDataset::Item& item,
                 std::uint64_t eval_seed) {
  Rng rng(eval_seed);
  const int n_frames = item.z0.dim(0);
  std::vector<int> t(n_frames);
  for (int& tv : t) tv = rng.uniform_int(1, pipeline.schedule().timesteps);
  nn::Tensor eps = nn::Tensor::zeros_like(item.z0);
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();

  const nn::Tensor z_t = forward_diffuse(item.z0, t, eps, pipeline.schedule());
  const nn::Tensor eps_hat = pipeline.predict_noise(z_t, t, item.f_s, item.f_d, item.f_c);
  double acc = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double d = eps_hat[i] - eps[i];
    acc += d * d;
  }
  return acc / static_cast<double>(eps.size());
}

}  // namespace

ToyTrainResult train_toy(const ToyTrainConfig& cfg,
                         std::unique_ptr<GuidancePipeline>* pipeline_out) {
  Rng master(cfg.seed);
  const std::uint64_t pipeline_seed = master.next_u64();
  const std::uint64_t data_seed = master.next_u64();
  const std::uint64_t train_seed = master.next_u64();
  const std::uint64_t eval_seed = master.next_u64();

  auto owned = std::make_unique<GuidancePipeline>(cfg.net, pipeline_seed, cfg.variant);
  GuidancePipeline& pipeline = *owned;

  const ToyDataset data = build_toy_dataset(cfg.net, cfg.sequences, data_seed);

  ToyTrainResult result;
  result.frozen_checksum_before = pipeline.base().store().checksum();
  result.eval_loss_before = eval_loss(pipeline, data.items[0], eval_seed);

  nn::SgdMomentum optimizer(cfg.lr, cfg.momentum);
  Rng train_rng(train_seed);
  for (int step = 0; step < cfg.steps; ++step) {
    const ToyDataset::Item& item = data.items[step % data.items.size()];
    TrainBatch batch;
    batch.z0 = item.z0;
    batch.f_s = item.f_s;
    batch.f_d = item.f_d;
    batch.f_c = item.f_c;
    batch.t.resize(item.z0.dim(0));
    for (int& tv : batch.t) tv = train_rng.uniform_int(1, pipeline.schedule().timesteps);
    batch.eps = nn::Tensor::zeros_like(item.z0);
    for (std::size_t i = 0; i < batch.eps.size(); ++i) batch.eps[i] = train_rng.normal();

    result.step_losses.push_back(training_step(pipeline, batch, optimizer));
  }

  result.eval_loss_after = eval_loss(pipeline, data.items[0], eval_seed);
  result.frozen_checksum_after = pipeline.base().store().checksum();
  if (pipeline_out) *pipeline_out = std::move(owned);
  return result;
}

void write_loss_csv(const std::vector<double>& losses, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss CSV: " + path.string());
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, losses[i]);
    out << buf;
  }
  if (!out) throw IoError("short write to loss CSV: " + path.string());
}

}  // namespace poseguide
