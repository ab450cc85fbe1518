#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string_view>

#include "poseguide/correspondence.hpp"
#include "poseguide/image.hpp"
#include "poseguide/nn/layers.hpp"

namespace poseguide {

// ---------------------------------------------------------------------------
// Diffusion schedule

struct NoiseSchedule {
  int timesteps = 0;
  std::vector<double> beta;       // beta_t at index t-1, t = 1..T
  std::vector<double> alpha_bar;  // cumulative product at index t, alpha_bar[0] = 1

  static NoiseSchedule linear(int timesteps = 1000, double beta_start = 1e-4,
                              double beta_end = 0.02);
  void validate() const;
};

// z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps, with a
// per-sample timestep t[n] in 1..T.
nn::Tensor forward_diffuse(const nn::Tensor& z0, const std::vector<int>& t,
                           const nn::Tensor& eps, const NoiseSchedule& schedule);

// ---------------------------------------------------------------------------
// Network configuration

struct GuidanceConfig {
  int image_size = 64;     // square pixel resolution of poses/fields
  int latent_down = 8;     // latent = image / latent_down
  int latent_channels = 4;
  std::vector<int> level_channels = {16, 24, 32};  // encoder widths, fine to coarse
  int temb_dim = 32;
  int correspondence_dim = 16;  // D_p
  int point_hidden = 32;
  std::vector<int> motion_channels = {8, 16, 32};  // one stride-2 stage each
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  int levels() const { return static_cast<int>(level_channels.size()); }
  int latent_size() const { return image_size / latent_down; }
  int level_size(int l) const { return latent_size() >> l; }
  void validate() const;
};

// Residual maps emitted by the hybrid ControlNet: one for the middle
// block plus one per up-block input, shapes matching the injection
// sites exactly. levels[l] corresponds to encoder level l (fine = 0).
struct GuidanceResiduals {
  nn::Tensor middle;
  std::vector<nn::Tensor> levels;
};

struct ResidualNodes {
  nn::NodePtr middle;
  std::vector<nn::NodePtr> levels;
};

// ---------------------------------------------------------------------------
// Blocks

namespace detail {

struct ResBlock {
  nn::Conv2dLayer conv1, conv2;
  nn::LinearLayer temb_proj;

  ResBlock() = default;
  ResBlock(nn::ParamStore& store, const std::string& name, int channels, int temb_dim,
           Rng& rng);
  nn::NodePtr operator()(const nn::NodePtr& x, const nn::NodePtr& temb) const;
};

struct TimeEmbed {
  nn::Param* null_embedding = nullptr;  // fixed learned stand-in for text conditioning
  nn::LinearLayer proj;
  int dim = 0;

  TimeEmbed() = default;
  TimeEmbed(nn::ParamStore& store, const std::string& name, int temb_dim, Rng& rng);
  nn::NodePtr operator()(const std::vector<int>& t) const;
};

// Encoder half shared (structurally) by the base denoiser and the
// hybrid ControlNet: stem conv, per-level ResBlock, stride-2 downs,
// middle ResBlock, plus its own timestep conditioning.
struct UnetEncoder {
  nn::Conv2dLayer stem;
  std::vector<ResBlock> blocks;
  std::vector<nn::Conv2dLayer> downs;
  ResBlock mid;
  TimeEmbed time;

  struct Features {
    std::vector<nn::NodePtr> levels;  // post-block feature per level
    nn::NodePtr middle;
    nn::NodePtr temb;
  };

  UnetEncoder() = default;
  UnetEncoder(nn::ParamStore& store, const std::string& prefix, const GuidanceConfig& cfg,
              Rng& rng);
  // inject[l], when present, is added to the level-l block input
  // (E^l_enc = E^l_enc + F_c^l).
  Features forward(const nn::NodePtr& z, const std::vector<int>& t,
                   const std::vector<nn::NodePtr>* inject) const;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Networks

// Small frozen encoder-decoder denoiser (epsilon-prediction). Weights
// are drawn at construction and never updated; text conditioning is a
// fixed learned null embedding folded into the timestep path.
class ToyDenoiser {
 public:
  ToyDenoiser(const GuidanceConfig& cfg, std::uint64_t seed);

  // r adds to the middle output and each up-block input; enc_inject
  // adds to the encoder block inputs (exp2 wiring). Either may be null.
  nn::NodePtr forward(const nn::NodePtr& z, const std::vector<int>& t,
                      const ResidualNodes* r = nullptr,
                      const std::vector<nn::NodePtr>* enc_inject = nullptr) const;
  nn::Tensor predict(const nn::Tensor& z_t, const std::vector<int>& t,
                     const GuidanceResiduals* r = nullptr) const;

  // Mid-block activations for the DIFT-style toy feature provider.
  nn::Tensor mid_activations(const nn::Tensor& z, int t) const;

  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }
  const GuidanceConfig& config() const { return cfg_; }

 private:
  GuidanceConfig cfg_;
  nn::ParamStore store_{"base_denoiser"};
  detail::UnetEncoder enc_;
  std::vector<detail::ResBlock> dec_blocks_;
  std::vector<nn::Conv2dLayer> up_convs_;  // level l -> l-1, for l = L-1..1
  nn::Conv2dLayer out_conv_;
};

// Trainable copy of the denoiser's encoder + middle block with
// zero-initialized 1x1 output convolutions, so every residual is
// exactly zero at initialization.
class HybridControlNet {
 public:
  HybridControlNet(const GuidanceConfig& cfg, const ToyDenoiser& base, Rng& rng);

  ResidualNodes forward(const nn::NodePtr& z, const std::vector<int>& t,
                        const std::vector<nn::NodePtr>* correspondence) const;

  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

 private:
  GuidanceConfig cfg_;
  nn::ParamStore store_{"controlnet"};
  detail::UnetEncoder enc_;
  std::vector<nn::Conv2dLayer> zero_levels_;
  nn::Conv2dLayer zero_mid_;
};

// Sparse branch + dense branch (identical Conv-SiLU-ZeroConv stages)
// fused by one convolution into a latent-shaped map. Output is exactly
// zero at initialization.
class MotionEncoder {
 public:
  MotionEncoder(const GuidanceConfig& cfg, Rng& rng);

  nn::NodePtr forward(const nn::NodePtr& f_s, const nn::NodePtr& f_d) const;
  nn::Tensor encode(const MotionFieldStack& f_s, const MotionFieldStack& f_d) const;

  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

 private:
  struct Branch {
    std::vector<nn::Conv2dLayer> convs;
    std::vector<nn::Conv2dLayer> zero_convs;
  };
  Branch make_branch(const std::string& name, Rng& rng);
  nn::NodePtr run_branch(const Branch& b, nn::NodePtr x) const;

  GuidanceConfig cfg_;
  nn::ParamStore store_{"motion_encoder"};
  Branch sparse_, dense_;
  nn::Conv2dLayer fusion_;
};

// Per-level two-layer perceptron applied per pixel, D_p -> level width.
// No biases anywhere and a zero-initialized final layer, so zero
// columns map to zero columns for every parameter setting; the map's
// sparsity survives encoding.
class PointEncoder {
 public:
  PointEncoder(const GuidanceConfig& cfg, Rng& rng);

  nn::NodePtr forward_level(const nn::NodePtr& level_map, int level) const;
  nn::Tensor encode_level(const nn::Tensor& level_map, int level) const;

  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

 private:
  GuidanceConfig cfg_;
  nn::ParamStore store_{"point_encoder"};
  std::vector<nn::Conv2dLayer> first_, second_;
};

// ---------------------------------------------------------------------------
// Pipeline and wiring variants

// full: F_m enters the ControlNet input, F_c the ControlNet encoder,
//       residuals feed the frozen denoiser.
// exp1: F_m moves to the denoiser input latent; ControlNet keeps F_c.
// exp2: no ControlNet; F_m and F_c feed the denoiser directly.
enum class WiringVariant { kFull, kExp1, kExp2 };

WiringVariant parse_variant(std::string_view name);
std::string_view variant_name(WiringVariant v);

struct TrainBatch {
  nn::Tensor z0;               // [N, latent_channels, h, w]
  nn::Tensor eps;              // same shape
  std::vector<int> t;          // per-frame timestep, 1..T
  nn::Tensor f_s, f_d;         // [N, 2, H, W]
  std::vector<nn::Tensor> f_c; // per level, [N, D_p, H_l, W_l]
};

class GuidancePipeline {
 public:
  GuidancePipeline(const GuidanceConfig& cfg, std::uint64_t seed,
                   WiringVariant variant = WiringVariant::kFull);

  const GuidanceConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  WiringVariant variant() const { return variant_; }
  void set_variant(WiringVariant v) { variant_ = v; }

  ToyDenoiser& base() { return *base_; }
  const ToyDenoiser& base() const { return *base_; }
  HybridControlNet& controlnet() { return *cnet_; }
  MotionEncoder& motion_encoder() { return *motion_; }
  PointEncoder& point_encoder() { return *point_; }

  // Value-level operation surface.
  nn::Tensor motion_encode(const MotionFieldStack& f_s, const MotionFieldStack& f_d) const {
    return motion_->encode(f_s, f_d);
  }
  nn::Tensor point_encode_level(const nn::Tensor& level_map, int level) const {
    return point_->encode_level(level_map, level);
  }
  GuidanceResiduals controlnet_forward(const nn::Tensor& z_t, const nn::Tensor& f_m,
                                       const std::vector<nn::Tensor>& f_c,
                                       const std::vector<int>& t) const;
  nn::Tensor denoise_with_guidance(const nn::Tensor& z_t, const std::vector<int>& t,
                                   const GuidanceResiduals* r) const {
    return base_->predict(z_t, t, r);
  }
  // Variant-aware end-to-end noise prediction.
  nn::Tensor predict_noise(const nn::Tensor& z_t, const std::vector<int>& t,
                           const nn::Tensor& f_s, const nn::Tensor& f_d,
                           const std::vector<nn::Tensor>& f_c) const;

  // Graph-level path used by training and gradcheck.
  nn::NodePtr predict_noise_node(const nn::NodePtr& z_t, const std::vector<int>& t,
                                 const nn::NodePtr& f_s, const nn::NodePtr& f_d,
                                 const std::vector<nn::NodePtr>& f_c) const;

  std::vector<nn::Param*> trainable_params();
  // Registration order: base_denoiser, controlnet, motion_encoder, point_encoder.
  std::vector<nn::ParamStore*> stores();
  std::vector<const nn::ParamStore*> stores() const;

  // Builds the per-level F_c tensors for a correspondence stack built at
  // full pixel resolution metadata (embeddings + trajectory).
  std::vector<nn::Tensor> correspondence_levels(const PointEmbeddings& emb,
                                                const TrajectoryMap& traj) const;

 private:
  GuidanceConfig cfg_;
  NoiseSchedule schedule_;
  WiringVariant variant_;
  std::unique_ptr<ToyDenoiser> base_;
  std::unique_ptr<HybridControlNet> cnet_;
  std::unique_ptr<MotionEncoder> motion_;
  std::unique_ptr<PointEncoder> point_;
};

// One optimizer update on MSE(eps, eps_hat); gradients flow only into
// the motion encoder, point encoder and ControlNet. Throws on NaN loss.
double training_step(GuidancePipeline& pipeline, const TrainBatch& batch,
                     nn::SgdMomentum& optimizer);

// ---------------------------------------------------------------------------
// Conversions

// Fixed average-pool stand-in for the latent encoder: channels are
// pooled R, G, B and luma at 1/latent_down resolution.
nn::Tensor encode_latent(const ImageD& image, int latent_down);

nn::Tensor stack_to_tensor(const MotionFieldStack& stack);
nn::Tensor correspondence_to_tensor(const CorrespondenceStack& stack);

// DIFT-style provider backed by the toy UNet's mid-block activations.
class ToyUnetFeatureProvider : public FeatureProvider {
 public:
  ToyUnetFeatureProvider(const ToyDenoiser& denoiser, int timestep = 50)
      : denoiser_(&denoiser), timestep_(timestep) {}
  FeatureMap extract(const ImageD& image) override;

 private:
  const ToyDenoiser* denoiser_;
  int timestep_;
};

// ---------------------------------------------------------------------------
// Checkpoints: one JSON manifest line (component names, param shapes,
// seed), then the raw little-endian float32 payloads in manifest order.
// save(load(file)) reproduces the file byte for byte.

void save_checkpoint(const GuidancePipeline& pipeline, std::uint64_t seed,
                     const std::filesystem::path& path);
std::uint64_t load_checkpoint(GuidancePipeline& pipeline, const std::filesystem::path& path);

}  // namespace poseguide
