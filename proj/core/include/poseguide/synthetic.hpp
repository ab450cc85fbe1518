#pragma once

#include <cstdint>
#include <optional>

#include "poseguide/guidance.hpp"
#include "poseguide/motion_field.hpp"
#include "poseguide/pose.hpp"

namespace poseguide {

// Bundled synthetic scenes: a smooth background with a colored moving
// disk whose keypoints ride rigidly on it. Deterministic per seed; used
// by the toy training run, the check suite and as demo input for the
// CLI.
struct SyntheticConfig {
  int image_size = 64;
  int driven_frames = 4;  // N; the pose file carries N+1 frames
  int keypoints = 8;
};

struct SyntheticSequence {
  PoseSequence poses;
  ImageD reference;             // 3 x H x W in [0, 1]
  std::vector<ImageD> frames;   // driven frames 1..N
};

SyntheticSequence make_synthetic_sequence(const SyntheticConfig& cfg, std::uint64_t seed);

// Precomputed training items: latents, both motion fields and the raw
// correspondence level maps for each sequence.
struct ToyDataset {
  struct Item {
    nn::Tensor z0;               // [N, 4, h, w]
    nn::Tensor f_s, f_d;         // [N, 2, H, W]
    std::vector<nn::Tensor> f_c; // per level, [N, D_p, H_l, W_l]
  };
  std::vector<Item> items;
};

ToyDataset build_toy_dataset(const GuidanceConfig& cfg, int sequences, std::uint64_t seed);

// Seed-fixed toy training (Eq.-2-style MSE on the noise), SGD with
// momentum. Bitwise reproducible for a fixed seed.
struct ToyTrainConfig {
  int steps = 200;
  std::uint64_t seed = 7;
  int sequences = 6;
  double lr = 1e-3;
  double momentum = 0.9;
  GuidanceConfig net;
  WiringVariant variant = WiringVariant::kFull;
};

struct ToyTrainResult {
  std::vector<double> step_losses;
  double eval_loss_before = 0.0;
  double eval_loss_after = 0.0;
  std::uint64_t frozen_checksum_before = 0;
  std::uint64_t frozen_checksum_after = 0;
};

// Builds the pipeline + dataset from cfg.seed, trains cfg.steps steps
// and reports the fixed-eval-batch loss before and after. When
// pipeline_out is given it receives the trained pipeline (for
// checkpointing).
ToyTrainResult train_toy(const ToyTrainConfig& cfg,
                         std::unique_ptr<GuidancePipeline>* pipeline_out = nullptr);

// Writes "step,loss" rows with round-trip-exact doubles; byte-identical
// across reruns with the same seed.
void write_loss_csv(const std::vector<double>& losses, const std::filesystem::path& path);

}  // namespace poseguide
