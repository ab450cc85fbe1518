#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "poseguide/nn/tensor.hpp"

namespace poseguide::nn {

// Define-by-run reverse-mode tape. Each forward op allocates a Node;
// backward() walks the graph once in reverse topological order. All
// iteration is sequential with a fixed order, so gradients (and hence
// training trajectories) are bitwise reproducible.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily by ensure_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pulls this->grad into parents

  void ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros_like(value);
  }
};

using NodePtr = std::shared_ptr<Node>;

// Leaf that participates in gradient computation (parameters).
NodePtr make_leaf(Tensor value, bool requires_grad);
// Graph input that never needs gradients (data, targets).
inline NodePtr make_constant(Tensor value) { return make_leaf(std::move(value), false); }

// Seeds d(root)/d(root) = 1 (root must be scalar) and accumulates into
// every reachable leaf with requires_grad. Leaf grads are accumulated,
// not overwritten; call zero_grad on parameters between steps.
void backward(const NodePtr& root);

// Elementwise sum, same shapes.
NodePtr add(const NodePtr& a, const NodePtr& b);
// x[N,C,H,W] + bias[C] broadcast over N, H, W.
NodePtr add_channel_bias(const NodePtr& x, const NodePtr& bias);
// x[N,C,H,W] + e[N,C] broadcast over H, W (timestep conditioning).
NodePtr add_sample_channel(const NodePtr& x, const NodePtr& e);
// x[N,F] + b[F] broadcast over rows.
NodePtr add_feature_bias(const NodePtr& x, const NodePtr& bias);
// Cross-correlation conv: x[N,Cin,H,W], w[Cout,Cin,k,k], optional bias[Cout].
NodePtr conv2d(const NodePtr& x, const NodePtr& w, const NodePtr& bias, int stride, int pad);
// x * sigmoid(x), elementwise.
NodePtr silu(const NodePtr& x);
// Nearest-neighbor 2x upsampling of [N,C,H,W].
NodePtr upsample_nearest2(const NodePtr& x);
// x[N,F] @ w[O,F]^T + bias[O].
NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& bias);
// Mean of squared differences, scalar output.
NodePtr mse_loss(const NodePtr& pred, const NodePtr& target);

}  // namespace poseguide::nn
