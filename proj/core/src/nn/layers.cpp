#include "poseguide/nn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace poseguide::nn {

namespace {

Tensor he_normal(std::vector<int> shape, std::size_t fan_in, Rng& rng, double gain) {
  Tensor t(std::move(shape));
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV offset basis
  auto mix = [&h](const void* bytes, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Param& p : params_) {
    for (std::size_t i = 0; i < p.node->value.size(); ++i) {
      const float f = static_cast<float>(p.node->value[i]);
      mix(&f, sizeof(f));
    }
  }
  return h;
}

void ParamStore::randomize(Rng& rng, double stddev) {
  for (Param& p : params_)
    for (std::size_t i = 0; i < p.node->value.size(); ++i)
      p.node->value[i] += rng.normal(0.0, stddev);
}

Conv2dLayer::Conv2dLayer(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                         int kernel, int stride, int pad, Init init, Rng& rng, bool with_bias,
                         double init_gain) : stride_(stride), pad_(pad) {
  Tensor w({out_ch, in_ch, kernel, kernel});
  if (init == Init::kHeNormal)
    w = he_normal({out_ch, in_ch, kernel, kernel},
                  static_cast<std::size_t>(in_ch) * kernel * kernel, rng, init_gain);
  w_ = &store.create(name + ".w", std::move(w));
  if (with_bias) b_ = &store.create(name + ".b", Tensor({out_ch}));
}

LinearLayer::LinearLayer(ParamStore& store, const std::string& name, int in_features,
                         int out_features, Init init, Rng& rng, bool with_bias,
                         double init_gain) {
  Tensor w({out_features, in_features});
  if (init == Init::kHeNormal)
    w = he_normal({out_features, in_features}, static_cast<std::size_t>(in_features), rng,
                  init_gain);
  w_ = &store.create(name + ".w", std::move(w));
  if (with_bias) b_ = &store.create(name + ".b", Tensor({out_features}));
}

void SgdMomentum::step(const std::vector<Param*>& params) {
  if (bound_.empty()) {
    bound_ = params;
    velocity_.reserve(params.size());
    for (Param* p : params) velocity_.push_back(Tensor::zeros_like(p->value()));
  } else if (bound_ != params) {
    throw ConfigError("SgdMomentum: parameter set changed between steps");
  }
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    Param* p = bound_[i];
    if (p->node->grad.empty()) continue;  // never touched by backward
    Tensor& v = velocity_[i];
    Tensor& val = p->node->value;
    const Tensor& g = p->node->grad;
    for (std::size_t j = 0; j < val.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      val[j] -= lr_ * v[j];
    }
  }
}

GradCheckReport finite_diff_gradcheck(const std::vector<Param*>& params,
                                      const std::function<NodePtr()>& loss, int probe_count,
                                      double h, Rng& rng) {
  if (h <= 0.0) throw ParamError("gradcheck: h must be > 0");
  if (params.empty()) throw ParamError("gradcheck: component has no parameters");

  // One analytic pass.
  for (Param* p : params)
    if (!p->node->grad.empty()) p->node->grad.fill(0.0);
  NodePtr root = loss();
  backward(root);

  // Central differences of a 64-bit loss carry roundoff of order
  // eps * |loss| / h; gradients below that scale can only be compared
  // absolutely. The floor keeps the relative error meaningful without
  // masking real defects (which show up at the gradient's own scale).
  const double noise_floor = 3e-9 * (1.0 + std::abs(root->value.item())) / h;

  GradCheckReport report;
  for (int probe = 0; probe < probe_count; ++probe) {
    Param* p = params[rng.uniform_int(0, static_cast<int>(params.size()) - 1)];
    const std::size_t idx =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(p->value().size()) - 1));

    const double analytic = p->node->grad.empty() ? 0.0 : p->node->grad[idx];
    const double saved = p->value()[idx];
    p->value()[idx] = saved + h;
    const double f_plus = loss()->value.item();
    p->value()[idx] = saved - h;
    const double f_minus = loss()->value.item();
    p->value()[idx] = saved;
    const double numeric = (f_plus - f_minus) / (2.0 * h);

    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6, noise_floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.probes;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = p->name + "[" + std::to_string(idx) + "]";
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace poseguide::nn
