#include <doctest.h>

#include <cmath>

#include "poseguide/nn/layers.hpp"
#include "poseguide/rng.hpp"

using namespace poseguide;
using nn::NodePtr;
using nn::Tensor;

namespace {

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double stddev = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

// Central-difference check of d(loss)/d(leaf) over every element.
double max_grad_error(const NodePtr& leaf, const std::function<NodePtr()>& loss,
                      double h = 1e-5) {
  if (!leaf->grad.empty()) leaf->grad.fill(0.0);  // leaves persist across calls
  NodePtr root = loss();
  nn::backward(root);
  Tensor analytic = leaf->grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < leaf->value.size(); ++i) {
    const double saved = leaf->value[i];
    leaf->value[i] = saved + h;
    const double fp = loss()->value.item();
    leaf->value[i] = saved - h;
    const double fm = loss()->value.item();
    leaf->value[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("conv2d forward matches a hand-computed 1x1-batch case") {
  // 1 sample, 1 channel, 3x3 input, single 3x3 kernel, pad 1: output at
  // the center is the full correlation sum.
  Tensor x({1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) x[i] = i + 1;
  Tensor w({1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) w[i] = 1.0;
  Tensor b({1});
  b[0] = 0.5;
  const NodePtr out = nn::conv2d(nn::make_constant(x), nn::make_constant(w),
                                 nn::make_constant(b), 1, 1);
  CHECK(out->value.at4(0, 0, 1, 1) == doctest::Approx(45.0 + 0.5));
  // Corner (0,0) sees only the 2x2 region {1,2,4,5}.
  CHECK(out->value.at4(0, 0, 0, 0) == doctest::Approx(12.0 + 0.5));
}

TEST_CASE("strided conv halves even spatial dims with pad 1") {
  Rng rng(3);
  const NodePtr out = nn::conv2d(nn::make_constant(random_tensor({2, 3, 8, 8}, rng)),
                                 nn::make_constant(random_tensor({5, 3, 3, 3}, rng)),
                                 nullptr, 2, 1);
  CHECK(out->value.shape() == std::vector<int>{2, 5, 4, 4});
}

TEST_CASE("gradients of every op agree with central differences") {
  Rng rng(7);

  SUBCASE("conv2d w.r.t. input, weight and bias") {
    NodePtr x = nn::make_leaf(random_tensor({2, 3, 5, 5}, rng), true);
    NodePtr w = nn::make_leaf(random_tensor({4, 3, 3, 3}, rng, 0.4), true);
    NodePtr b = nn::make_leaf(random_tensor({4}, rng, 0.2), true);
    const Tensor target = random_tensor({2, 4, 3, 3}, rng);
    auto loss = [&] {
      return nn::mse_loss(nn::conv2d(x, w, b, 1, 0), nn::make_constant(target));
    };
    CHECK(max_grad_error(x, loss) < 1e-6);
    CHECK(max_grad_error(w, loss) < 1e-6);
    CHECK(max_grad_error(b, loss) < 1e-6);
  }

  SUBCASE("strided padded conv2d") {
    NodePtr x = nn::make_leaf(random_tensor({1, 2, 6, 6}, rng), true);
    NodePtr w = nn::make_leaf(random_tensor({3, 2, 3, 3}, rng, 0.4), true);
    const Tensor target = random_tensor({1, 3, 3, 3}, rng);
    auto loss = [&] {
      return nn::mse_loss(nn::conv2d(x, w, nullptr, 2, 1), nn::make_constant(target));
    };
    CHECK(max_grad_error(x, loss) < 1e-6);
    CHECK(max_grad_error(w, loss) < 1e-6);
  }

  SUBCASE("silu") {
    NodePtr x = nn::make_leaf(random_tensor({2, 2, 3, 3}, rng, 2.0), true);
    const Tensor target = random_tensor({2, 2, 3, 3}, rng);
    auto loss = [&] { return nn::mse_loss(nn::silu(x), nn::make_constant(target)); };
    CHECK(max_grad_error(x, loss) < 1e-6);
  }

  SUBCASE("upsample_nearest2") {
    NodePtr x = nn::make_leaf(random_tensor({1, 2, 3, 3}, rng), true);
    const Tensor target = random_tensor({1, 2, 6, 6}, rng);
    auto loss = [&] {
      return nn::mse_loss(nn::upsample_nearest2(x), nn::make_constant(target));
    };
    CHECK(max_grad_error(x, loss) < 1e-6);
  }

  SUBCASE("linear and biases") {
    NodePtr x = nn::make_leaf(random_tensor({3, 4}, rng), true);
    NodePtr w = nn::make_leaf(random_tensor({5, 4}, rng, 0.5), true);
    NodePtr b = nn::make_leaf(random_tensor({5}, rng, 0.2), true);
    const Tensor target = random_tensor({3, 5}, rng);
    auto loss = [&] { return nn::mse_loss(nn::linear(x, w, b), nn::make_constant(target)); };
    CHECK(max_grad_error(x, loss) < 1e-6);
    CHECK(max_grad_error(w, loss) < 1e-6);
    CHECK(max_grad_error(b, loss) < 1e-6);
  }

  SUBCASE("broadcast adds") {
    NodePtr x = nn::make_leaf(random_tensor({2, 3, 4, 4}, rng), true);
    NodePtr cb = nn::make_leaf(random_tensor({3}, rng), true);
    NodePtr sc = nn::make_leaf(random_tensor({2, 3}, rng), true);
    const Tensor target = random_tensor({2, 3, 4, 4}, rng);
    auto loss = [&] {
      return nn::mse_loss(nn::add_sample_channel(nn::add_channel_bias(x, cb), sc),
                          nn::make_constant(target));
    };
    CHECK(max_grad_error(x, loss) < 1e-6);
    CHECK(max_grad_error(cb, loss) < 1e-6);
    CHECK(max_grad_error(sc, loss) < 1e-6);
  }
}

TEST_CASE("gradients accumulate when a leaf is used twice") {
  Rng rng(11);
  NodePtr x = nn::make_leaf(random_tensor({1, 2, 3, 3}, rng), true);
  const Tensor target = random_tensor({1, 2, 3, 3}, rng);
  auto loss = [&] { return nn::mse_loss(nn::add(x, x), nn::make_constant(target)); };
  CHECK(max_grad_error(x, loss) < 1e-6);
}

TEST_CASE("frozen leaves receive no gradient but pass gradient through") {
  Rng rng(13);
  NodePtr x = nn::make_leaf(random_tensor({1, 2, 4, 4}, rng), true);
  NodePtr w_frozen = nn::make_leaf(random_tensor({2, 2, 3, 3}, rng, 0.4), false);
  const Tensor target = random_tensor({1, 2, 4, 4}, rng);
  NodePtr root = nn::mse_loss(nn::conv2d(x, w_frozen, nullptr, 1, 1),
                              nn::make_constant(target));
  nn::backward(root);
  CHECK(w_frozen->grad.empty());
  REQUIRE(!x->grad.empty());
  double norm = 0.0;
  for (std::size_t i = 0; i < x->grad.size(); ++i) norm += std::abs(x->grad[i]);
  CHECK(norm > 0.0);
}

TEST_CASE("finite_diff_gradcheck on a linear layer with quadratic loss") {
  // The analytic gradient of a quadratic in affine maps is exact, so
  // the relative error is limited only by finite-difference noise.
  Rng rng(17);
  nn::ParamStore store("probe");
  nn::LinearLayer layer(store, "fc", 6, 4, nn::Init::kHeNormal, rng);
  const Tensor input = random_tensor({3, 6}, rng);
  const Tensor target = random_tensor({3, 4}, rng);
  auto loss = [&] {
    return nn::mse_loss(layer(nn::make_constant(input)), nn::make_constant(target));
  };
  Rng probe_rng(19);
  const nn::GradCheckReport report =
      nn::finite_diff_gradcheck(store.params(), loss, 64, 1e-5, probe_rng);
  CHECK(report.probes == 64);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("a zero-initialized conv weight still receives nonzero gradient") {
  Rng rng(23);
  nn::ParamStore store("probe");
  nn::Conv2dLayer zero_conv(store, "zero", 2, 2, 1, 1, 0, nn::Init::kZero, rng);
  const Tensor input = random_tensor({1, 2, 3, 3}, rng);
  const Tensor target = random_tensor({1, 2, 3, 3}, rng, 2.0);
  NodePtr root = nn::mse_loss(zero_conv(nn::make_constant(input)), nn::make_constant(target));
  nn::backward(root);
  const nn::Param* w = store.params()[0];
  REQUIRE(!w->node->grad.empty());
  double norm = 0.0;
  for (std::size_t i = 0; i < w->node->grad.size(); ++i) norm += std::abs(w->node->grad[i]);
  CHECK(norm > 0.0);
}

TEST_CASE("SGD with momentum minimizes a quadratic deterministically") {
  Rng rng(29);
  nn::ParamStore store("opt");
  nn::Param& p = store.create("theta", random_tensor({4}, rng));
  const Tensor target = random_tensor({4}, rng);

  auto run = [&](Tensor start) {
    p.value() = std::move(start);
    nn::SgdMomentum opt(0.05, 0.9);
    double last = 0.0;
    for (int step = 0; step < 200; ++step) {
      store.zero_grads();
      NodePtr root = nn::mse_loss(p.node, nn::make_constant(target));
      nn::backward(root);
      opt.step(store.params());
      last = root->value.item();
    }
    return last;
  };
  const Tensor start = p.value();
  const double a = run(start);
  CHECK(a < 1e-8);
}

TEST_CASE("param store checksums change with values and freezing flags requires_grad") {
  Rng rng(31);
  nn::ParamStore store("net");
  nn::Param& p = store.create("w", random_tensor({8}, rng));
  const std::uint64_t before = store.checksum();
  p.value()[0] += 1.0;
  CHECK(store.checksum() != before);

  CHECK(p.node->requires_grad);
  store.set_trainable(false);
  CHECK(!p.node->requires_grad);
}
