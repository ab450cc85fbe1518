#include "poseguide/guidance.hpp"

#include <algorithm>
#include <cmath>

namespace poseguide {

using nn::NodePtr;
using nn::Tensor;

// ---------------------------------------------------------------------------
// Schedule

NoiseSchedule NoiseSchedule::linear(int timesteps, double beta_start, double beta_end) {
  if (timesteps < 1) throw ParamError("schedule needs at least one timestep");
  NoiseSchedule s;
  s.timesteps = timesteps;
  s.beta.resize(timesteps);
  s.alpha_bar.resize(timesteps + 1);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= timesteps; ++t) {
    const double frac = timesteps == 1 ? 0.0 : static_cast<double>(t - 1) / (timesteps - 1);
    s.beta[t - 1] = beta_start + frac * (beta_end - beta_start);
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t - 1]);
  }
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  if (timesteps < 1 || static_cast<int>(beta.size()) != timesteps ||
      static_cast<int>(alpha_bar.size()) != timesteps + 1)
    throw ConfigError("noise schedule: inconsistent sizes");
  if (std::abs(alpha_bar[0] - 1.0) > 1e-12)
    throw ConfigError("noise schedule: alpha_bar[0] must be 1");
  for (int t = 1; t <= timesteps; ++t) {
    if (!(beta[t - 1] > 0.0 && beta[t - 1] < 1.0))
      throw ConfigError("noise schedule: beta out of (0, 1) at t=" + std::to_string(t));
    if (!(alpha_bar[t] < alpha_bar[t - 1]))
      throw ConfigError("noise schedule: alpha_bar not strictly decreasing at t=" +
                        std::to_string(t));
  }
}

Tensor forward_diffuse(const Tensor& z0, const std::vector<int>& t, const Tensor& eps,
                       const NoiseSchedule& schedule) {
  nn::require_same_shape(z0, eps, "forward_diffuse");
  if (z0.rank() != 4) throw ShapeError("forward_diffuse expects [N, C, H, W] latents");
  const int n_batch = z0.dim(0);
  if (static_cast<int>(t.size()) != n_batch)
    throw ShapeError("forward_diffuse: one timestep per sample required");
  for (int tv : t)
    if (tv < 1 || tv > schedule.timesteps)
      throw IndexError("forward_diffuse: t=" + std::to_string(tv) + " outside [1, " +
                       std::to_string(schedule.timesteps) + "]");

  Tensor out = z0;
  const std::size_t per = z0.size() / n_batch;
  for (int n = 0; n < n_batch; ++n) {
    const double ab = schedule.alpha_bar[t[n]];
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t j = n * per + i;
      out[j] = a * z0[j] + b * eps[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config

void GuidanceConfig::validate() const {
  if (image_size <= 0 || latent_down <= 0 || image_size % latent_down != 0)
    throw ConfigError("image_size must be a positive multiple of latent_down");
  if (latent_channels < 1) throw ConfigError("latent_channels must be >= 1");
  if (level_channels.empty()) throw ConfigError("level_channels must be non-empty");
  const int l_coarse = levels() - 1;
  if (latent_size() % (1 << l_coarse) != 0 || level_size(l_coarse) < 1)
    throw ConfigError("latent size does not support " + std::to_string(levels()) + " levels");
  if (temb_dim < 4 || temb_dim % 2 != 0) throw ConfigError("temb_dim must be even and >= 4");
  if (correspondence_dim < 1) throw ConfigError("correspondence_dim must be >= 1");
  if (point_hidden < 1) throw ConfigError("point_hidden must be >= 1");
  if ((1 << motion_channels.size()) != latent_down)
    throw ConfigError("motion_channels must contain log2(latent_down) stages");
  if (timesteps < 1) throw ConfigError("timesteps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1");
}

// ---------------------------------------------------------------------------
// Blocks

namespace detail {

ResBlock::ResBlock(nn::ParamStore& store, const std::string& name, int channels, int temb_dim,
                   Rng& rng)
    : conv1(store, name + ".conv1", channels, channels, 3, 1, 1, nn::Init::kHeNormal, rng),
      conv2(store, name + ".conv2", channels, channels, 3, 1, 1, nn::Init::kHeNormal, rng,
            /*with_bias=*/true, /*init_gain=*/0.25),
      temb_proj(store, name + ".temb", temb_dim, channels, nn::Init::kHeNormal, rng,
                /*with_bias=*/true, /*init_gain=*/0.5) {}

NodePtr ResBlock::operator()(const NodePtr& x, const NodePtr& temb) const {
  NodePtr h = conv1(x);
  h = nn::add_sample_channel(h, temb_proj(temb));
  h = nn::silu(h);
  h = conv2(h);
  h = nn::silu(h);
  return nn::add(x, h);
}

TimeEmbed::TimeEmbed(nn::ParamStore& store, const std::string& name, int temb_dim, Rng& rng)
    : dim(temb_dim) {
  Tensor null_init({temb_dim});
  for (int i = 0; i < temb_dim; ++i) null_init[i] = rng.normal(0.0, 0.2);
  null_embedding = &store.create(name + ".null_embedding", std::move(null_init));
  proj = nn::LinearLayer(store, name + ".proj", temb_dim, temb_dim, nn::Init::kHeNormal, rng);
}

NodePtr TimeEmbed::operator()(const std::vector<int>& t) const {
  const int n_batch = static_cast<int>(t.size());
  const int half = dim / 2;
  Tensor sinu({n_batch, dim});
  for (int n = 0; n < n_batch; ++n) {
    for (int i = 0; i < half; ++i) {
      const double freq =
          half > 1 ? std::exp(-std::log(10000.0) * i / (half - 1)) : 1.0;
      sinu.at2(n, 2 * i) = std::sin(t[n] * freq);
      sinu.at2(n, 2 * i + 1) = std::cos(t[n] * freq);
    }
  }
  // The null conditioning embedding stands in for the text branch; it
  // is folded into the timestep path as a per-row bias.
  NodePtr e = nn::make_constant(std::move(sinu));
  e = nn::add_feature_bias(e, null_embedding->node);
  e = proj(e);
  return nn::silu(e);
}

UnetEncoder::UnetEncoder(nn::ParamStore& store, const std::string& prefix,
                         const GuidanceConfig& cfg, Rng& rng) {
  const auto& ch = cfg.level_channels;
  stem = nn::Conv2dLayer(store, prefix + ".stem", cfg.latent_channels, ch[0], 3, 1, 1,
                         nn::Init::kHeNormal, rng);
  for (int l = 0; l < cfg.levels(); ++l)
    blocks.emplace_back(store, prefix + ".block" + std::to_string(l), ch[l], cfg.temb_dim, rng);
  for (int l = 0; l + 1 < cfg.levels(); ++l)
    downs.emplace_back(store, prefix + ".down" + std::to_string(l), ch[l], ch[l + 1], 3, 2, 1,
                       nn::Init::kHeNormal, rng);
  mid = ResBlock(store, prefix + ".mid", ch.back(), cfg.temb_dim, rng);
  time = TimeEmbed(store, prefix + ".time", cfg.temb_dim, rng);
}

UnetEncoder::Features UnetEncoder::forward(const NodePtr& z, const std::vector<int>& t,
                                           const std::vector<NodePtr>* inject) const {
  const int n_levels = static_cast<int>(blocks.size());
  if (inject && static_cast<int>(inject->size()) != n_levels)
    throw ShapeError("encoder injection list must have one entry per level");

  Features out;
  out.temb = time(t);
  NodePtr x = stem(z);
  for (int l = 0; l < n_levels; ++l) {
    if (inject && (*inject)[l]) {
      const Tensor& want = x->value;
      const Tensor& got = (*inject)[l]->value;
      if (!want.same_shape(got))
        throw ShapeError("level " + std::to_string(l) + ": injected map shape " +
                         got.shape_str() + " does not match encoder feature " +
                         want.shape_str());
      x = nn::add(x, (*inject)[l]);
    }
    x = blocks[l](x, out.temb);
    out.levels.push_back(x);
    if (l + 1 < n_levels) x = downs[l](x);
  }
  out.middle = mid(x, out.temb);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ToyDenoiser

ToyDenoiser::ToyDenoiser(const GuidanceConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  enc_ = detail::UnetEncoder(store_, "enc", cfg_, rng);
  const auto& ch = cfg_.level_channels;
  dec_blocks_.resize(cfg_.levels());
  up_convs_.resize(cfg_.levels() - 1);
  for (int l = cfg_.levels() - 1; l >= 0; --l) {
    dec_blocks_[l] =
        detail::ResBlock(store_, "dec.block" + std::to_string(l), ch[l], cfg_.temb_dim, rng);
    if (l > 0)
      up_convs_[l - 1] = nn::Conv2dLayer(store_, "dec.up" + std::to_string(l), ch[l], ch[l - 1],
                                         3, 1, 1, nn::Init::kHeNormal, rng);
  }
  out_conv_ = nn::Conv2dLayer(store_, "dec.out", ch[0], cfg_.latent_channels, 3, 1, 1,
                              nn::Init::kHeNormal, rng, /*with_bias=*/true,
                              /*init_gain=*/0.3);
  store_.set_trainable(false);  // frozen after construction
}

NodePtr ToyDenoiser::forward(const NodePtr& z, const std::vector<int>& t,
                             const ResidualNodes* r,
                             const std::vector<NodePtr>* enc_inject) const {
  const Tensor& zv = z->value;
  if (zv.rank() != 4 || zv.dim(1) != cfg_.latent_channels || zv.dim(2) != cfg_.latent_size() ||
      zv.dim(3) != cfg_.latent_size())
    throw ShapeError("denoiser input must be [N, " + std::to_string(cfg_.latent_channels) +
                     ", " + std::to_string(cfg_.latent_size()) + ", " +
                     std::to_string(cfg_.latent_size()) + "], got " + zv.shape_str());
  if (r && static_cast<int>(r->levels.size()) != cfg_.levels())
    throw ShapeError("residuals must carry one map per level plus middle");

  const detail::UnetEncoder::Features enc = enc_.forward(z, t, enc_inject);

  NodePtr x = enc.middle;
  if (r && r->middle) {
    if (!r->middle->value.same_shape(x->value))
      throw ShapeError("middle residual shape " + r->middle->value.shape_str() +
                       " does not match injection site " + x->value.shape_str());
    x = nn::add(x, r->middle);
  }
  for (int l = cfg_.levels() - 1; l >= 0; --l) {
    x = nn::add(x, enc.levels[l]);
    if (r && r->levels[l]) {
      if (!r->levels[l]->value.same_shape(x->value))
        throw ShapeError("level " + std::to_string(l) + " residual shape " +
                         r->levels[l]->value.shape_str() + " does not match injection site " +
                         x->value.shape_str());
      x = nn::add(x, r->levels[l]);
    }
    x = dec_blocks_[l](x, enc.temb);
    if (l > 0) x = up_convs_[l - 1](nn::upsample_nearest2(x));
  }
  return out_conv_(x);
}

Tensor ToyDenoiser::predict(const Tensor& z_t, const std::vector<int>& t,
                            const GuidanceResiduals* r) const {
  NodePtr z = nn::make_constant(z_t);
  if (!r) return forward(z, t)->value;
  ResidualNodes nodes;
  nodes.middle = nn::make_constant(r->middle);
  for (const Tensor& lv : r->levels) nodes.levels.push_back(nn::make_constant(lv));
  return forward(z, t, &nodes)->value;
}

Tensor ToyDenoiser::mid_activations(const Tensor& z, int t) const {
  NodePtr zn = nn::make_constant(z);
  const std::vector<int> ts(static_cast<std::size_t>(z.dim(0)), t);
  return enc_.forward(zn, ts, nullptr).middle->value;
}

// ---------------------------------------------------------------------------
// HybridControlNet

HybridControlNet::HybridControlNet(const GuidanceConfig& cfg, const ToyDenoiser& base, Rng& rng)
    : cfg_(cfg) {
  enc_ = detail::UnetEncoder(store_, "enc", cfg_, rng);

  // Trainable copy: pull the base encoder's weights. The encoder is the
  // first thing either constructor registers, so the stores line up.
  auto own = store_.params();
  auto src = base.store().params();
  if (own.size() > src.size())
    throw ShapeError("controlnet/base encoder layout mismatch");
  for (std::size_t i = 0; i < own.size(); ++i) {
    const std::string& a = own[i]->name;
    const std::string& b = src[i]->name;
    if (a.substr(a.find('.')) != b.substr(b.find('.')) ||
        !own[i]->value().same_shape(src[i]->value()))
      throw ShapeError("controlnet/base encoder layout mismatch at " + a);
    own[i]->node->value = src[i]->node->value;
  }

  const auto& ch = cfg_.level_channels;
  for (int l = 0; l < cfg_.levels(); ++l)
    zero_levels_.emplace_back(store_, "zero.level" + std::to_string(l), ch[l], ch[l], 1, 1, 0,
                              nn::Init::kZero, rng);
  zero_mid_ = nn::Conv2dLayer(store_, "zero.mid", ch.back(), ch.back(), 1, 1, 0,
                              nn::Init::kZero, rng);
}

ResidualNodes HybridControlNet::forward(const NodePtr& z, const std::vector<int>& t,
                                        const std::vector<NodePtr>* correspondence) const {
  const detail::UnetEncoder::Features enc = enc_.forward(z, t, correspondence);
  ResidualNodes r;
  for (int l = 0; l < cfg_.levels(); ++l) r.levels.push_back(zero_levels_[l](enc.levels[l]));
  r.middle = zero_mid_(enc.middle);
  return r;
}

// ---------------------------------------------------------------------------
// MotionEncoder

MotionEncoder::Branch MotionEncoder::make_branch(const std::string& name, Rng& rng) {
  Branch b;
  int in_ch = 2;
  for (std::size_t i = 0; i < cfg_.motion_channels.size(); ++i) {
    const int out_ch = cfg_.motion_channels[i];
    b.convs.emplace_back(store_, name + ".conv" + std::to_string(i), in_ch, out_ch, 3, 2, 1,
                         nn::Init::kHeNormal, rng);
    b.zero_convs.emplace_back(store_, name + ".zero" + std::to_string(i), out_ch, out_ch, 1, 1,
                              0, nn::Init::kZero, rng);
    in_ch = out_ch;
  }
  return b;
}

MotionEncoder::MotionEncoder(const GuidanceConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  sparse_ = make_branch("sparse", rng);
  dense_ = make_branch("dense", rng);
  fusion_ = nn::Conv2dLayer(store_, "fusion", cfg_.motion_channels.back(),
                            cfg_.latent_channels, 3, 1, 1, nn::Init::kHeNormal, rng);
}

NodePtr MotionEncoder::run_branch(const Branch& b, NodePtr x) const {
  for (std::size_t i = 0; i < b.convs.size(); ++i) {
    x = b.convs[i](x);
    x = nn::silu(x);
    x = b.zero_convs[i](x);
  }
  return x;
}

NodePtr MotionEncoder::forward(const NodePtr& f_s, const NodePtr& f_d) const {
  nn::require_same_shape(f_s->value, f_d->value, "motion_encode");
  const Tensor& v = f_s->value;
  if (v.rank() != 4 || v.dim(1) != 2)
    throw ShapeError("motion fields must be [N, 2, H, W], got " + v.shape_str());
  if (v.dim(2) != cfg_.image_size || v.dim(3) != cfg_.image_size)
    throw ShapeError("motion fields must be " + std::to_string(cfg_.image_size) + "x" +
                     std::to_string(cfg_.image_size) + ", got " + v.shape_str());
  return fusion_(nn::add(run_branch(sparse_, f_s), run_branch(dense_, f_d)));
}

Tensor MotionEncoder::encode(const MotionFieldStack& f_s, const MotionFieldStack& f_d) const {
  if (f_s.frames() != f_d.frames() || f_s.height() != f_d.height() ||
      f_s.width() != f_d.width())
    throw ShapeError("motion_encode: sparse/dense stacks disagree in shape");
  return forward(nn::make_constant(stack_to_tensor(f_s)),
                 nn::make_constant(stack_to_tensor(f_d)))
      ->value;
}

// ---------------------------------------------------------------------------
// PointEncoder

PointEncoder::PointEncoder(const GuidanceConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  for (int l = 0; l < cfg_.levels(); ++l) {
    // No biases: a zero input column must stay zero through the whole
    // perceptron for every parameter setting, not just at init.
    first_.emplace_back(store_, "level" + std::to_string(l) + ".fc1", cfg_.correspondence_dim,
                        cfg_.point_hidden, 1, 1, 0, nn::Init::kHeNormal, rng,
                        /*with_bias=*/false);
    second_.emplace_back(store_, "level" + std::to_string(l) + ".fc2", cfg_.point_hidden,
                         cfg_.level_channels[l], 1, 1, 0, nn::Init::kZero, rng,
                         /*with_bias=*/false);
  }
}

NodePtr PointEncoder::forward_level(const NodePtr& level_map, int level) const {
  if (level < 0 || level >= cfg_.levels())
    throw IndexError("point encoder level " + std::to_string(level) + " out of range");
  const Tensor& v = level_map->value;
  if (v.rank() != 4 || v.dim(1) != cfg_.correspondence_dim)
    throw ShapeError("level " + std::to_string(level) + ": correspondence map must have D_p=" +
                     std::to_string(cfg_.correspondence_dim) + " channels, got " +
                     v.shape_str());
  return second_[level](nn::silu(first_[level](level_map)));
}

Tensor PointEncoder::encode_level(const Tensor& level_map, int level) const {
  return forward_level(nn::make_constant(level_map), level)->value;
}

// ---------------------------------------------------------------------------
// Pipeline

WiringVariant parse_variant(std::string_view name) {
  if (name == "full") return WiringVariant::kFull;
  if (name == "exp1") return WiringVariant::kExp1;
  if (name == "exp2") return WiringVariant::kExp2;
  throw ConfigError("unknown wiring variant: " + std::string(name) +
                    " (expected full, exp1 or exp2)");
}

std::string_view variant_name(WiringVariant v) {
  switch (v) {
    case WiringVariant::kFull: return "full";
    case WiringVariant::kExp1: return "exp1";
    case WiringVariant::kExp2: return "exp2";
  }
  throw ConfigError("invalid wiring variant value");
}

GuidancePipeline::GuidancePipeline(const GuidanceConfig& cfg, std::uint64_t seed,
                                   WiringVariant variant)
    : cfg_(cfg), variant_(variant) {
  cfg_.validate();
  schedule_ = NoiseSchedule::linear(cfg_.timesteps, cfg_.beta_start, cfg_.beta_end);
  Rng master(seed);
  base_ = std::make_unique<ToyDenoiser>(cfg_, master.next_u64());
  Rng cnet_rng(master.next_u64());
  cnet_ = std::make_unique<HybridControlNet>(cfg_, *base_, cnet_rng);
  Rng motion_rng(master.next_u64());
  motion_ = std::make_unique<MotionEncoder>(cfg_, motion_rng);
  Rng point_rng(master.next_u64());
  point_ = std::make_unique<PointEncoder>(cfg_, point_rng);
}

GuidanceResiduals GuidancePipeline::controlnet_forward(const Tensor& z_t, const Tensor& f_m,
                                                       const std::vector<Tensor>& f_c,
                                                       const std::vector<int>& t) const {
  NodePtr z = nn::make_constant(z_t);
  NodePtr input = nn::add(z, nn::make_constant(f_m));
  std::vector<NodePtr> inject;
  for (int l = 0; l < cfg_.levels(); ++l)
    inject.push_back(point_->forward_level(nn::make_constant(f_c[l]), l));
  const ResidualNodes r = cnet_->forward(input, t, &inject);
  GuidanceResiduals out;
  out.middle = r.middle->value;
  for (const NodePtr& lv : r.levels) out.levels.push_back(lv->value);
  return out;
}

NodePtr GuidancePipeline::predict_noise_node(const NodePtr& z_t, const std::vector<int>& t,
                                             const NodePtr& f_s, const NodePtr& f_d,
                                             const std::vector<NodePtr>& f_c) const {
  if (static_cast<int>(f_c.size()) != cfg_.levels())
    throw ShapeError("expected " + std::to_string(cfg_.levels()) +
                     " correspondence levels, got " + std::to_string(f_c.size()));

  const NodePtr f_m = motion_->forward(f_s, f_d);
  std::vector<NodePtr> encoded;
  for (int l = 0; l < cfg_.levels(); ++l) encoded.push_back(point_->forward_level(f_c[l], l));

  switch (variant_) {
    case WiringVariant::kFull: {
      const ResidualNodes r = cnet_->forward(nn::add(z_t, f_m), t, &encoded);
      return base_->forward(z_t, t, &r, nullptr);
    }
    case WiringVariant::kExp1: {
      const ResidualNodes r = cnet_->forward(z_t, t, &encoded);
      return base_->forward(nn::add(z_t, f_m), t, &r, nullptr);
    }
    case WiringVariant::kExp2:
      return base_->forward(nn::add(z_t, f_m), t, nullptr, &encoded);
  }
  throw ConfigError("invalid wiring variant value");
}

Tensor GuidancePipeline::predict_noise(const Tensor& z_t, const std::vector<int>& t,
                                       const Tensor& f_s, const Tensor& f_d,
                                       const std::vector<Tensor>& f_c) const {
  std::vector<NodePtr> f_c_nodes;
  f_c_nodes.reserve(f_c.size());
  for (const Tensor& lv : f_c) f_c_nodes.push_back(nn::make_constant(lv));
  return predict_noise_node(nn::make_constant(z_t), t, nn::make_constant(f_s),
                            nn::make_constant(f_d), f_c_nodes)
      ->value;
}

std::vector<nn::Param*> GuidancePipeline::trainable_params() {
  std::vector<nn::Param*> out;
  for (nn::ParamStore* s : {&cnet_->store(), &motion_->store(), &point_->store()})
    for (nn::Param* p : s->params()) out.push_back(p);
  return out;
}

std::vector<nn::ParamStore*> GuidancePipeline::stores() {
  return {&base_->store(), &cnet_->store(), &motion_->store(), &point_->store()};
}

std::vector<const nn::ParamStore*> GuidancePipeline::stores() const {
  return {&base_->store(), &cnet_->store(), &motion_->store(), &point_->store()};
}

std::vector<Tensor> GuidancePipeline::correspondence_levels(const PointEmbeddings& emb,
                                                            const TrajectoryMap& traj) const {
  std::vector<Tensor> out;
  for (int l = 0; l < cfg_.levels(); ++l) {
    const int s = cfg_.level_size(l);
    const CorrespondenceStack stack =
        rescale_correspondence(emb, traj, s, s, cfg_.image_size, cfg_.image_size);
    out.push_back(correspondence_to_tensor(stack));
  }
  return out;
}

double training_step(GuidancePipeline& pipeline, const TrainBatch& batch,
                     nn::SgdMomentum& optimizer) {
  const Tensor z_t = forward_diffuse(batch.z0, batch.t, batch.eps, pipeline.schedule());

  std::vector<NodePtr> f_c;
  f_c.reserve(batch.f_c.size());
  for (const Tensor& lv : batch.f_c) f_c.push_back(nn::make_constant(lv));

  const NodePtr eps_hat =
      pipeline.predict_noise_node(nn::make_constant(z_t), batch.t,
                                  nn::make_constant(batch.f_s), nn::make_constant(batch.f_d),
                                  f_c);
  const NodePtr loss = nn::mse_loss(eps_hat, nn::make_constant(batch.eps));
  const double loss_value = loss->value.item();
  if (!std::isfinite(loss_value))
    throw Error("training diverged: non-finite loss " + std::to_string(loss_value));

  for (nn::ParamStore* s : pipeline.stores()) s->zero_grads();
  nn::backward(loss);
  std::vector<nn::Param*> trainable = pipeline.trainable_params();
  optimizer.step(trainable);
  return loss_value;
}

// ---------------------------------------------------------------------------
// Conversions

Tensor encode_latent(const ImageD& image, int latent_down) {
  if (image.channels() != 3) throw ShapeError("encode_latent expects an RGB image");
  if (latent_down <= 0 || image.height() % latent_down != 0 ||
      image.width() % latent_down != 0)
    throw ShapeError("encode_latent: image dims must be multiples of latent_down");
  const int h = image.height() / latent_down, w = image.width() / latent_down;
  Tensor out({1, 4, h, w});
  const double inv = 1.0 / (static_cast<double>(latent_down) * latent_down);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double rgb[3] = {0.0, 0.0, 0.0};
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int yy = 0; yy < latent_down; ++yy)
          for (int xx = 0; xx < latent_down; ++xx)
            acc += image.at(c, y * latent_down + yy, x * latent_down + xx);
        rgb[c] = acc * inv;
        out.at4(0, c, y, x) = rgb[c];
      }
      out.at4(0, 3, y, x) = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
    }
  return out;
}

Tensor stack_to_tensor(const MotionFieldStack& stack) {
  Tensor out({stack.frames(), 2, stack.height(), stack.width()});
  for (int n = 0; n < stack.frames(); ++n)
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < stack.height(); ++y)
        for (int x = 0; x < stack.width(); ++x) out.at4(n, c, y, x) = stack.at(n, c, y, x);
  return out;
}

Tensor correspondence_to_tensor(const CorrespondenceStack& stack) {
  Tensor out({stack.frames, stack.dp, stack.height, stack.width});
  for (int n = 0; n < stack.frames; ++n) {
    const ImageF frame = stack.dense_frame(n);
    for (int c = 0; c < stack.dp; ++c)
      for (int y = 0; y < stack.height; ++y)
        for (int x = 0; x < stack.width; ++x) out.at4(n, c, y, x) = frame.at(c, y, x);
  }
  return out;
}

FeatureMap ToyUnetFeatureProvider::extract(const ImageD& image) {
  const Tensor z = encode_latent(image, denoiser_->config().latent_down);
  const Tensor mid = denoiser_->mid_activations(z, timestep_);
  FeatureMap fm;
  fm.dp = mid.dim(1);
  fm.hf = mid.dim(2);
  fm.wf = mid.dim(3);
  fm.src_height = image.height();
  fm.src_width = image.width();
  fm.data.resize(static_cast<std::size_t>(fm.dp) * fm.hf * fm.wf);
  for (int c = 0; c < fm.dp; ++c)
    for (int y = 0; y < fm.hf; ++y)
      for (int x = 0; x < fm.wf; ++x)
        fm.at(c, y, x) = static_cast<float>(mid.at4(0, c, y, x));
  return fm;
}

}  // namespace poseguide
