#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "poseguide/nn/autodiff.hpp"
#include "poseguide/rng.hpp"

namespace poseguide::nn {

// Named parameter, backed by a persistent autodiff leaf.
struct Param {
  std::string name;
  NodePtr node;

  Tensor& value() { return node->value; }
  const Tensor& value() const { return node->value; }
};

// Flat registry of one network component's parameters, in registration
// order (which fixes the checkpoint layout). Freezing a store flips
// requires_grad off so gradients still flow *through* its ops but are
// never accumulated into (or applied to) its weights.
class ParamStore {
 public:
  explicit ParamStore(std::string component_name) : name_(std::move(component_name)) {}
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  const std::string& name() const { return name_; }
  bool trainable() const { return trainable_; }

  Param& create(const std::string& param_name, Tensor init) {
    params_.push_back({name_ + "." + param_name, make_leaf(std::move(init), trainable_)});
    return params_.back();
  }

  void set_trainable(bool trainable) {
    trainable_ = trainable;
    for (Param& p : params_) p.node->requires_grad = trainable;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (Param& p : params_) out.push_back(&p);
    return out;
  }
  std::vector<const Param*> params() const {
    std::vector<const Param*> out;
    out.reserve(params_.size());
    for (const Param& p : params_) out.push_back(&p);
    return out;
  }

  void zero_grads() {
    for (Param& p : params_)
      if (!p.node->grad.empty()) p.node->grad.fill(0.0);
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Param& p : params_) n += p.node->value.size();
    return n;
  }

  // FNV-1a over the float32 image of every value, in order; the
  // freezing contract is asserted with this.
  std::uint64_t checksum() const;

  // Perturbs every value; used to exercise gradcheck away from the
  // zero-conv initialization.
  void randomize(Rng& rng, double stddev);

 private:
  std::string name_;
  bool trainable_ = true;
  std::deque<Param> params_;
};

enum class Init { kHeNormal, kZero };

class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel,
              int stride, int pad, Init init, Rng& rng, bool with_bias = true,
              double init_gain = 1.0);

  NodePtr operator()(const NodePtr& x) const {
    return conv2d(x, w_->node, b_ ? b_->node : nullptr, stride_, pad_);
  }

  Param& weight() { return *w_; }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
  int stride_ = 1, pad_ = 0;
};

class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(ParamStore& store, const std::string& name, int in_features, int out_features,
              Init init, Rng& rng, bool with_bias = true, double init_gain = 1.0);

  NodePtr operator()(const NodePtr& x) const {
    return linear(x, w_->node, b_ ? b_->node : nullptr);
  }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
};

// Plain SGD with momentum 0.9; the optimizer the toy run is pinned to.
class SgdMomentum {
 public:
  explicit SgdMomentum(double lr = 1e-3, double momentum = 0.9)
      : lr_(lr), momentum_(momentum) {}

  void step(const std::vector<Param*>& params);

 private:
  double lr_, momentum_;
  std::vector<Tensor> velocity_;
  std::vector<Param*> bound_;  // parallel to velocity_, fixed on first step
};

// Central-difference gradient verification over randomly probed
// parameters. `loss` must rebuild the forward graph from current
// parameter values and return the scalar loss node.
struct GradCheckReport {
  double max_rel_error = 0.0;
  int probes = 0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

GradCheckReport finite_diff_gradcheck(const std::vector<Param*>& params,
                                      const std::function<NodePtr()>& loss, int probe_count,
                                      double h, Rng& rng);

}  // namespace poseguide::nn
