#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "poseguide/guidance.hpp"
#include "poseguide/rng.hpp"
#include "poseguide/synthetic.hpp"

using namespace poseguide;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

GuidanceConfig small_config() {
  GuidanceConfig cfg;
  cfg.image_size = 32;
  cfg.level_channels = {8, 12};
  cfg.motion_channels = {4, 6, 8};
  cfg.correspondence_dim = 6;
  cfg.point_hidden = 8;
  return cfg;
}

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double stddev = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

struct GuidanceInputs {
  Tensor z_t, f_s, f_d;
  std::vector<Tensor> f_c;
  std::vector<int> t;
};

GuidanceInputs random_inputs(const GuidanceConfig& cfg, int frames, Rng& rng) {
  GuidanceInputs in;
  const int latent = cfg.latent_size();
  in.z_t = random_tensor({frames, cfg.latent_channels, latent, latent}, rng);
  in.f_s = random_tensor({frames, 2, cfg.image_size, cfg.image_size}, rng, 2.0);
  in.f_d = random_tensor({frames, 2, cfg.image_size, cfg.image_size}, rng, 2.0);
  for (int l = 0; l < cfg.levels(); ++l)
    in.f_c.push_back(random_tensor(
        {frames, cfg.correspondence_dim, cfg.level_size(l), cfg.level_size(l)}, rng, 0.5));
  in.t.resize(frames);
  for (int& tv : in.t) tv = rng.uniform_int(1, cfg.timesteps);
  return in;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("the linear schedule is monotone with alpha_bar[0] = 1") {
  const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  CHECK(s.alpha_bar[0] == 1.0);
  CHECK(s.beta.front() == doctest::Approx(1e-4));
  CHECK(s.beta.back() == doctest::Approx(0.02));
  for (int t = 1; t <= 1000; ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
  CHECK(s.alpha_bar[1000] < 1e-4);  // essentially pure noise at t = T
}

TEST_CASE("forward diffusion matches the closed form") {
  NoiseSchedule s;
  s.timesteps = 2;
  s.beta = {0.5, 0.5};
  s.alpha_bar = {1.0, 0.5, 0.25};

  Tensor z0({1, 1, 1, 1});
  z0[0] = 2.0;
  Tensor eps({1, 1, 1, 1});
  eps[0] = 1.0;

  SUBCASE("direct substitution at alpha_bar = 0.25") {
    const Tensor z_t = forward_diffuse(z0, {2}, eps, s);
    CHECK(z_t[0] == doctest::Approx(0.5 * 2.0 + std::sqrt(0.75) * 1.0).epsilon(1e-12));
    CHECK(z_t[0] == doctest::Approx(1.8660254).epsilon(1e-6));
  }
  SUBCASE("alpha_bar -> 1 limit returns z0") {
    NoiseSchedule near_id = s;
    near_id.alpha_bar = {1.0, 1.0 - 1e-15, 0.25};
    const Tensor z_t = forward_diffuse(z0, {1}, eps, near_id);
    CHECK(z_t[0] == doctest::Approx(2.0).epsilon(1e-7));
  }
  SUBCASE("zero noise gives sqrt(alpha_bar) * z0 exactly") {
    eps[0] = 0.0;
    const Tensor z_t = forward_diffuse(z0, {1}, eps, s);
    CHECK(z_t[0] == std::sqrt(0.5) * 2.0);
  }
  SUBCASE("timestep bounds are enforced") {
    CHECK_THROWS_AS(forward_diffuse(z0, {0}, eps, s), IndexError);
    CHECK_THROWS_AS(forward_diffuse(z0, {3}, eps, s), IndexError);
    Tensor bad({1, 1, 1, 2});
    CHECK_THROWS_AS(forward_diffuse(z0, {1}, bad, s), ShapeError);
  }
}

TEST_CASE("z_t variance approaches 1 for unit-variance z0 and eps at large t") {
  const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Rng rng(101);
  const int samples = 10000;
  double sum = 0.0, sum_sq = 0.0;
  Tensor z0({1, 1, 1, 1}), eps({1, 1, 1, 1});
  for (int i = 0; i < samples; ++i) {
    z0[0] = rng.normal();
    eps[0] = rng.normal();
    const double z = forward_diffuse(z0, {1000}, eps, s)[0];
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / samples;
  const double var = sum_sq / samples - mean * mean;
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("motion encoder output is exactly zero at initialization") {
  const GuidanceConfig cfg = small_config();
  Rng rng(5);
  MotionEncoder enc(cfg, rng);
  Rng data_rng(7);
  const Tensor f_s = random_tensor({2, 2, cfg.image_size, cfg.image_size}, data_rng, 3.0);
  const Tensor f_d = random_tensor({2, 2, cfg.image_size, cfg.image_size}, data_rng, 3.0);
  const Tensor out =
      enc.forward(nn::make_constant(f_s), nn::make_constant(f_d))->value;
  CHECK(out.shape() == std::vector<int>{2, cfg.latent_channels, cfg.latent_size(),
                                        cfg.latent_size()});
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("motion encoder frame count and shape error contracts") {
  const GuidanceConfig cfg = small_config();
  Rng rng(5);
  MotionEncoder enc(cfg, rng);
  MotionFieldStack f_s(3, cfg.image_size, cfg.image_size);
  MotionFieldStack f_d(3, cfg.image_size, cfg.image_size);
  const Tensor out = enc.encode(f_s, f_d);
  CHECK(out.dim(0) == 3);  // N frames in, N frames out

  MotionFieldStack mismatched(2, cfg.image_size, cfg.image_size);
  CHECK_THROWS_AS(enc.encode(f_s, mismatched), ShapeError);
}

TEST_CASE("randomized motion encoder responds to zero input with a deterministic constant") {
  const GuidanceConfig cfg = small_config();
  Rng rng(5);
  MotionEncoder enc(cfg, rng);
  Rng perturb(9);
  enc.store().randomize(perturb, 0.1);
  const Tensor zeros({1, 2, cfg.image_size, cfg.image_size});
  const Tensor a = enc.forward(nn::make_constant(zeros), nn::make_constant(zeros))->value;
  const Tensor b = enc.forward(nn::make_constant(zeros), nn::make_constant(zeros))->value;
  CHECK(bitwise_equal(a, b));
}

TEST_CASE("point encoder maps zero columns to zero columns, trained or not") {
  const GuidanceConfig cfg = small_config();
  Rng rng(11);
  PointEncoder enc(cfg, rng);

  const int s0 = cfg.level_size(0);
  Tensor level({1, cfg.correspondence_dim, s0, s0});
  // One nonzero column at (2, 3).
  for (int c = 0; c < cfg.correspondence_dim; ++c) level.at4(0, c, 3, 2) = 0.5 + c;

  SUBCASE("all-zero map stays all-zero at init") {
    const Tensor zeros({1, cfg.correspondence_dim, s0, s0});
    const Tensor out = enc.encode_level(zeros, 0);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
  }

  SUBCASE("support is preserved after perturbing every parameter") {
    Rng perturb(13);
    enc.store().randomize(perturb, 0.3);
    const Tensor out = enc.encode_level(level, 0);
    bool nonzero_at_column = false;
    for (int c = 0; c < cfg.level_channels[0]; ++c) {
      if (out.at4(0, c, 3, 2) != 0.0) nonzero_at_column = true;
      for (int y = 0; y < s0; ++y)
        for (int x = 0; x < s0; ++x)
          if (y != 3 || x != 2) CHECK(out.at4(0, c, y, x) == 0.0);
    }
    CHECK(nonzero_at_column);
  }

  SUBCASE("wrong channel count raises a shape error") {
    Tensor bad({1, cfg.correspondence_dim + 1, s0, s0});
    CHECK_THROWS_AS(enc.encode_level(bad, 0), ShapeError);
  }
}

TEST_CASE("point-encoder support is unchanged by a training step") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 21);
  Rng rng(23);

  TrainBatch batch;
  const int latent = cfg.latent_size();
  batch.z0 = random_tensor({2, cfg.latent_channels, latent, latent}, rng, 0.3);
  batch.eps = random_tensor({2, cfg.latent_channels, latent, latent}, rng);
  batch.t = {100, 900};
  batch.f_s = random_tensor({2, 2, cfg.image_size, cfg.image_size}, rng);
  batch.f_d = random_tensor({2, 2, cfg.image_size, cfg.image_size}, rng);
  for (int l = 0; l < cfg.levels(); ++l) {
    Tensor level({2, cfg.correspondence_dim, cfg.level_size(l), cfg.level_size(l)});
    for (int c = 0; c < cfg.correspondence_dim; ++c) {
      level.at4(0, c, 1, 1) = 1.0 + c;
      level.at4(1, c, 0, 1) = 2.0 + c;
    }
    batch.f_c.push_back(std::move(level));
  }

  nn::SgdMomentum opt(1e-3, 0.9);
  training_step(pipeline, batch, opt);

  const Tensor out = pipeline.point_encode_level(batch.f_c[0], 0);
  for (int n = 0; n < 2; ++n) {
    const int keep_y = n == 0 ? 1 : 0;
    for (int c = 0; c < cfg.level_channels[0]; ++c)
      for (int y = 0; y < cfg.level_size(0); ++y)
        for (int x = 0; x < cfg.level_size(0); ++x)
          if (y != keep_y || x != 1) CHECK(out.at4(n, c, y, x) == 0.0);
  }
}

TEST_CASE("freshly initialized ControlNet emits exactly-zero residuals") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 31);
  Rng rng(33);
  const GuidanceInputs in = random_inputs(cfg, 2, rng);
  const Tensor f_m({2, cfg.latent_channels, cfg.latent_size(), cfg.latent_size()});
  const GuidanceResiduals r = pipeline.controlnet_forward(in.z_t, f_m, in.f_c, in.t);
  REQUIRE(static_cast<int>(r.levels.size()) == cfg.levels());
  for (std::size_t i = 0; i < r.middle.size(); ++i) CHECK(r.middle[i] == 0.0);
  for (const Tensor& lv : r.levels)
    for (std::size_t i = 0; i < lv.size(); ++i) CHECK(lv[i] == 0.0);
}

TEST_CASE("denoising with zero residuals is bit-identical to the plain denoiser") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 41);
  Rng rng(43);
  const GuidanceInputs in = random_inputs(cfg, 2, rng);

  const Tensor plain = pipeline.base().predict(in.z_t, in.t);

  GuidanceResiduals zero;
  zero.middle = Tensor({2, cfg.level_channels.back(), cfg.level_size(cfg.levels() - 1),
                        cfg.level_size(cfg.levels() - 1)});
  for (int l = 0; l < cfg.levels(); ++l)
    zero.levels.push_back(
        Tensor({2, cfg.level_channels[l], cfg.level_size(l), cfg.level_size(l)}));
  const Tensor guided = pipeline.denoise_with_guidance(in.z_t, in.t, &zero);
  CHECK(bitwise_equal(plain, guided));

  // A nonzero middle residual must change the output.
  zero.middle.fill(0.25);
  const Tensor nudged = pipeline.denoise_with_guidance(in.z_t, in.t, &zero);
  CHECK(!bitwise_equal(plain, nudged));
}

TEST_CASE("transparency holds at initialization for all wiring variants") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 51);
  Rng rng(53);
  for (int trial = 0; trial < 5; ++trial) {
    const GuidanceInputs in = random_inputs(cfg, 1, rng);
    const Tensor plain = pipeline.base().predict(in.z_t, in.t);
    for (WiringVariant v :
         {WiringVariant::kFull, WiringVariant::kExp1, WiringVariant::kExp2}) {
      pipeline.set_variant(v);
      const Tensor guided = pipeline.predict_noise(in.z_t, in.t, in.f_s, in.f_d, in.f_c);
      CHECK(bitwise_equal(plain, guided));
    }
  }
  CHECK_THROWS_AS(parse_variant("exp3"), ConfigError);
  CHECK(parse_variant("full") == WiringVariant::kFull);
}

TEST_CASE("zero guidance on a trained ControlNet reduces to the plain response") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 55);
  Rng rng(57);
  pipeline.controlnet().store().randomize(rng, 0.2);  // "trained" stand-in
  pipeline.point_encoder().store().randomize(rng, 0.2);

  const GuidanceInputs in = random_inputs(cfg, 1, rng);
  const Tensor f_m({1, cfg.latent_channels, cfg.latent_size(), cfg.latent_size()});
  std::vector<Tensor> zero_fc;
  for (int l = 0; l < cfg.levels(); ++l)
    zero_fc.emplace_back(std::vector<int>{1, cfg.correspondence_dim, cfg.level_size(l),
                                          cfg.level_size(l)});

  // F_m = 0 and F_c = 0: the encoded injections are zero columns (the
  // point MLP is bias-free), so the residuals equal the ControlNet's
  // guidance-free response to z_t.
  const GuidanceResiduals guided = pipeline.controlnet_forward(in.z_t, f_m, zero_fc, in.t);
  const ResidualNodes plain =
      pipeline.controlnet().forward(nn::make_constant(in.z_t), in.t, nullptr);
  CHECK(bitwise_equal(guided.middle, plain.middle->value));
  for (int l = 0; l < cfg.levels(); ++l)
    CHECK(bitwise_equal(guided.levels[l], plain.levels[l]->value));

  // Nonlinearity: doubling z_t does not just rescale the residuals.
  Tensor doubled = in.z_t;
  for (std::size_t i = 0; i < doubled.size(); ++i) doubled[i] *= 2.0;
  const GuidanceResiduals r2 = pipeline.controlnet_forward(doubled, f_m, zero_fc, in.t);
  bool differs = false;
  for (std::size_t i = 0; i < r2.middle.size(); ++i)
    if (std::abs(r2.middle[i] - 2.0 * guided.middle[i]) > 1e-9) differs = true;
  CHECK(differs);
  CHECK(!bitwise_equal(r2.middle, guided.middle));
}

TEST_CASE("doubling z_t changes the denoiser output (nonlinearity present)") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 61);
  Rng rng(63);
  const GuidanceInputs in = random_inputs(cfg, 1, rng);
  Tensor doubled = in.z_t;
  for (std::size_t i = 0; i < doubled.size(); ++i) doubled[i] *= 2.0;
  const Tensor a = pipeline.base().predict(in.z_t, in.t);
  const Tensor b = pipeline.base().predict(doubled, in.t);
  bool differs_nonlinearly = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(b[i] - 2.0 * a[i]) > 1e-9) differs_nonlinearly = true;
  CHECK(differs_nonlinearly);
}

TEST_CASE("training: exact prediction gives zero loss, frozen base never moves") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 71);
  Rng rng(73);

  SUBCASE("eps_hat == eps implies loss 0") {
    // mse_loss against itself, the degenerate identity of Eq.-2-style
    // training.
    const Tensor x = random_tensor({2, 3}, rng);
    const double loss =
        nn::mse_loss(nn::make_constant(x), nn::make_constant(x))->value.item();
    CHECK(loss == 0.0);
  }

  SUBCASE("frozen-base checksum unchanged after 10 steps") {
    const std::uint64_t before = pipeline.base().store().checksum();
    nn::SgdMomentum opt(1e-3, 0.9);
    const int latent = cfg.latent_size();
    for (int step = 0; step < 10; ++step) {
      TrainBatch batch;
      batch.z0 = random_tensor({1, cfg.latent_channels, latent, latent}, rng, 0.3);
      batch.eps = random_tensor({1, cfg.latent_channels, latent, latent}, rng);
      batch.t = {rng.uniform_int(1, cfg.timesteps)};
      batch.f_s = random_tensor({1, 2, cfg.image_size, cfg.image_size}, rng);
      batch.f_d = random_tensor({1, 2, cfg.image_size, cfg.image_size}, rng);
      for (int l = 0; l < cfg.levels(); ++l)
        batch.f_c.push_back(random_tensor(
            {1, cfg.correspondence_dim, cfg.level_size(l), cfg.level_size(l)}, rng, 0.3));
      training_step(pipeline, batch, opt);
    }
    CHECK(pipeline.base().store().checksum() == before);
    // And the trainable branches did move.
    bool moved = false;
    for (const nn::Param* p : pipeline.controlnet().store().params())
      for (std::size_t i = 0; i < p->value().size() && !moved; ++i)
        if (p->node->grad.size() && p->node->grad[i] != 0.0) moved = true;
    CHECK(moved);
  }
}

TEST_CASE("a poisoned parameter aborts training with a diagnostic, not silence") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 75);
  Rng rng(77);
  pipeline.controlnet().store().params()[0]->value()[0] =
      std::numeric_limits<double>::quiet_NaN();

  TrainBatch batch;
  const int latent = cfg.latent_size();
  batch.z0 = random_tensor({1, cfg.latent_channels, latent, latent}, rng);
  batch.eps = random_tensor({1, cfg.latent_channels, latent, latent}, rng);
  batch.t = {500};
  batch.f_s = random_tensor({1, 2, cfg.image_size, cfg.image_size}, rng);
  batch.f_d = random_tensor({1, 2, cfg.image_size, cfg.image_size}, rng);
  for (int l = 0; l < cfg.levels(); ++l)
    batch.f_c.push_back(random_tensor(
        {1, cfg.correspondence_dim, cfg.level_size(l), cfg.level_size(l)}, rng));
  nn::SgdMomentum opt(1e-3, 0.9);
  CHECK_THROWS_WITH_AS(training_step(pipeline, batch, opt), doctest::Contains("non-finite"),
                       Error);
}

TEST_CASE("checkpoint loading rejects truncated payloads") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline a(cfg, 79);
  const fs::path dir = fs::temp_directory_path() / "poseguide_test_guidance";
  fs::create_directories(dir);
  const fs::path p = dir / "trunc.ckpt";
  save_checkpoint(a, 5, p);
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 64);
  GuidancePipeline b(cfg, 80);
  CHECK_THROWS_AS(load_checkpoint(b, p), IoError);
}

TEST_CASE("gradcheck over the full guided path stays under 1e-4") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 81);
  Rng rng(83);
  pipeline.controlnet().store().randomize(rng, 0.2);
  pipeline.motion_encoder().store().randomize(rng, 0.2);
  pipeline.point_encoder().store().randomize(rng, 0.2);

  const GuidanceInputs in = random_inputs(cfg, 1, rng);
  const Tensor target = random_tensor(
      {1, cfg.latent_channels, cfg.latent_size(), cfg.latent_size()}, rng);
  auto loss = [&] {
    std::vector<nn::NodePtr> f_c;
    for (const Tensor& lv : in.f_c) f_c.push_back(nn::make_constant(lv));
    return nn::mse_loss(
        pipeline.predict_noise_node(nn::make_constant(in.z_t), in.t,
                                    nn::make_constant(in.f_s), nn::make_constant(in.f_d), f_c),
        nn::make_constant(target));
  };
  Rng probe(85);
  for (nn::ParamStore* store :
       {&pipeline.controlnet().store(), &pipeline.motion_encoder().store(),
        &pipeline.point_encoder().store()}) {
    const nn::GradCheckReport report =
        nn::finite_diff_gradcheck(store->params(), loss, 24, 1e-5, probe);
    INFO(store->name(), " worst: ", report.worst_param);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("checkpoints restore every component bit for bit") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline a(cfg, 91, WiringVariant::kExp1);
  Rng rng(93);
  a.controlnet().store().randomize(rng, 0.2);
  a.motion_encoder().store().randomize(rng, 0.2);

  const fs::path dir = fs::temp_directory_path() / "poseguide_test_guidance";
  fs::create_directories(dir);
  const fs::path p = dir / "pipe.ckpt";
  save_checkpoint(a, 1234, p);

  GuidancePipeline b(cfg, 999);
  const std::uint64_t seed = load_checkpoint(b, p);
  CHECK(seed == 1234);
  CHECK(b.variant() == WiringVariant::kExp1);
  const auto sa = a.stores(), sb = b.stores();
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i]->checksum() == sb[i]->checksum());

  // Mismatched architecture is rejected.
  GuidanceConfig other = cfg;
  other.level_channels = {8, 16};
  GuidancePipeline c(other, 1);
  CHECK_THROWS_AS(load_checkpoint(c, p), FormatError);
}

TEST_CASE("toy-unet feature provider exposes mid-block activations") {
  const GuidanceConfig cfg = small_config();
  GuidancePipeline pipeline(cfg, 95);
  ToyUnetFeatureProvider provider(pipeline.base());
  const ImageD image(3, cfg.image_size, cfg.image_size, 0.5);
  const FeatureMap fm = provider.extract(image);
  CHECK(fm.dp == cfg.level_channels.back());
  CHECK(fm.hf == cfg.level_size(cfg.levels() - 1));
  CHECK(fm.src_height == cfg.image_size);
}

TEST_CASE("encode_latent pools RGB + luma at 1/f resolution") {
  ImageD img(3, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      img.at(0, y, x) = 1.0;
      img.at(1, y, x) = 0.5;
      img.at(2, y, x) = 0.0;
    }
  const Tensor z = encode_latent(img, 8);
  CHECK(z.shape() == std::vector<int>{1, 4, 2, 2});
  CHECK(z.at4(0, 0, 0, 0) == doctest::Approx(1.0));
  CHECK(z.at4(0, 1, 1, 1) == doctest::Approx(0.5));
  CHECK(z.at4(0, 3, 0, 1) == doctest::Approx(0.299 + 0.587 * 0.5));
  CHECK_THROWS_AS(encode_latent(img, 3), ShapeError);
}
