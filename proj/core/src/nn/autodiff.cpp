#include "poseguide/nn/autodiff.hpp"

#include <cmath>
#include <unordered_set>

namespace poseguide::nn {

namespace {

NodePtr make_op(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const NodePtr& p : n->parents)
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

void require_rank(const NodePtr& t, int rank, const char* op) {
  if (t->value.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     t->value.shape_str());
}

}  // namespace

NodePtr make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

void backward(const NodePtr& root) {
  if (root->value.size() != 1) throw ShapeError("backward: root must be scalar");
  if (!root->requires_grad) return;

  // Reverse post-order DFS restricted to the grad-requiring subgraph.
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Node*> order;
  std::unordered_set<Node*> visited{root.get()};
  std::vector<Frame> stack{{root.get(), 0}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.contains(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    for (int side = 0; side < 2; ++side) {
      Node& p = *n.parents[side];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  });
}

NodePtr add_channel_bias(const NodePtr& x, const NodePtr& bias) {
  require_rank(x, 4, "add_channel_bias");
  require_rank(bias, 1, "add_channel_bias");
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (bias->value.dim(0) != C) throw ShapeError("add_channel_bias: bias length != channels");

  Tensor out = x->value;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double b = bias->value[c];
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) out.at4(n, c, y, xx) += b;
    }
  return make_op(std::move(out), {x, bias}, [N, C, H, W](Node& nd) {
    Node& px = *nd.parents[0];
    Node& pb = *nd.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < nd.grad.size(); ++i) px.grad[i] += nd.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) acc += nd.grad.at4(n, c, y, x);
          pb.grad[c] += acc;
        }
    }
  });
}

NodePtr add_sample_channel(const NodePtr& x, const NodePtr& e) {
  require_rank(x, 4, "add_sample_channel");
  require_rank(e, 2, "add_sample_channel");
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (e->value.dim(0) != N || e->value.dim(1) != C)
    throw ShapeError("add_sample_channel: embedding shape " + e->value.shape_str() +
                     " does not match [N, C]");

  Tensor out = x->value;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double b = e->value.at2(n, c);
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) out.at4(n, c, y, xx) += b;
    }
  return make_op(std::move(out), {x, e}, [N, C, H, W](Node& nd) {
    Node& px = *nd.parents[0];
    Node& pe = *nd.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < nd.grad.size(); ++i) px.grad[i] += nd.grad[i];
    }
    if (pe.requires_grad) {
      pe.ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) acc += nd.grad.at4(n, c, y, x);
          pe.grad.at2(n, c) += acc;
        }
    }
  });
}

NodePtr add_feature_bias(const NodePtr& x, const NodePtr& bias) {
  require_rank(x, 2, "add_feature_bias");
  require_rank(bias, 1, "add_feature_bias");
  const int N = x->value.dim(0), F = x->value.dim(1);
  if (bias->value.dim(0) != F) throw ShapeError("add_feature_bias: bias length != features");

  Tensor out = x->value;
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f) out.at2(n, f) += bias->value[f];
  return make_op(std::move(out), {x, bias}, [N, F](Node& nd) {
    Node& px = *nd.parents[0];
    Node& pb = *nd.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < nd.grad.size(); ++i) px.grad[i] += nd.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f) pb.grad[f] += nd.grad.at2(n, f);
    }
  });
}

NodePtr conv2d(const NodePtr& x, const NodePtr& w, const NodePtr& bias, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const int N = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int Cout = w->value.dim(0), k = w->value.dim(2);
  if (w->value.dim(1) != Cin)
    throw ShapeError("conv2d: weight expects " + std::to_string(w->value.dim(1)) +
                     " input channels, got " + std::to_string(Cin));
  if (w->value.dim(3) != k) throw ShapeError("conv2d: only square kernels supported");
  if (bias) {
    require_rank(bias, 1, "conv2d bias");
    if (bias->value.dim(0) != Cout) throw ShapeError("conv2d: bias length != out channels");
  }
  const int Hout = (H + 2 * pad - k) / stride + 1;
  const int Wout = (W + 2 * pad - k) / stride + 1;
  if (Hout <= 0 || Wout <= 0) throw ShapeError("conv2d: output would be empty");

  Tensor out({N, Cout, Hout, Wout});
  for (int n = 0; n < N; ++n)
    for (int oc = 0; oc < Cout; ++oc) {
      const double b = bias ? bias->value[oc] : 0.0;
      for (int oy = 0; oy < Hout; ++oy)
        for (int ox = 0; ox < Wout; ++ox) {
          double acc = b;
          for (int ic = 0; ic < Cin; ++ic)
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= W) continue;
                acc += w->value.at4(oc, ic, ky, kx) * x->value.at4(n, ic, iy, ix);
              }
            }
          out.at4(n, oc, oy, ox) = acc;
        }
    }

  std::vector<NodePtr> parents = bias ? std::vector<NodePtr>{x, w, bias}
                                      : std::vector<NodePtr>{x, w};
  return make_op(std::move(out), std::move(parents),
                 [N, Cin, H, W, Cout, k, stride, pad](Node& nd) {
    Node& px = *nd.parents[0];
    Node& pw = *nd.parents[1];
    Node* pb = nd.parents.size() > 2 ? nd.parents[2].get() : nullptr;
    const bool need_x = px.requires_grad;
    const bool need_w = pw.requires_grad;
    const bool need_b = pb && pb->requires_grad;
    if (need_x) px.ensure_grad();
    if (need_w) pw.ensure_grad();
    if (need_b) pb->ensure_grad();

    const int Hout = nd.grad.dim(2), Wout = nd.grad.dim(3);
    for (int n = 0; n < N; ++n)
      for (int oc = 0; oc < Cout; ++oc)
        for (int oy = 0; oy < Hout; ++oy)
          for (int ox = 0; ox < Wout; ++ox) {
            const double g = nd.grad.at4(n, oc, oy, ox);
            if (g == 0.0) continue;
            if (need_b) pb->grad[oc] += g;
            for (int ic = 0; ic < Cin; ++ic)
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= W) continue;
                  if (need_w) pw.grad.at4(oc, ic, ky, kx) += px.value.at4(n, ic, iy, ix) * g;
                  if (need_x) px.grad.at4(n, ic, iy, ix) += pw.value.at4(oc, ic, ky, kx) * g;
                }
              }
          }
  });
}

NodePtr silu(const NodePtr& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = out[i];
    out[i] = v / (1.0 + std::exp(-v));
  }
  return make_op(std::move(out), {x}, [](Node& nd) {
    Node& px = *nd.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) {
      const double v = px.value[i];
      const double s = 1.0 / (1.0 + std::exp(-v));
      px.grad[i] += nd.grad[i] * s * (1.0 + v * (1.0 - s));
    }
  });
}

NodePtr upsample_nearest2(const NodePtr& x) {
  require_rank(x, 4, "upsample_nearest2");
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  Tensor out({N, C, H * 2, W * 2});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < 2 * W; ++xx)
          out.at4(n, c, y, xx) = x->value.at4(n, c, y / 2, xx / 2);
  return make_op(std::move(out), {x}, [N, C, H, W](Node& nd) {
    Node& px = *nd.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
          for (int x = 0; x < 2 * W; ++x)
            px.grad.at4(n, c, y / 2, x / 2) += nd.grad.at4(n, c, y, x);
  });
}

NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& bias) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const int N = x->value.dim(0), F = x->value.dim(1), O = w->value.dim(0);
  if (w->value.dim(1) != F)
    throw ShapeError("linear: weight expects " + std::to_string(w->value.dim(1)) +
                     " features, got " + std::to_string(F));
  if (bias) {
    require_rank(bias, 1, "linear bias");
    if (bias->value.dim(0) != O) throw ShapeError("linear: bias length != out features");
  }

  Tensor out({N, O});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) {
      double acc = bias ? bias->value[o] : 0.0;
      for (int f = 0; f < F; ++f) acc += w->value.at2(o, f) * x->value.at2(n, f);
      out.at2(n, o) = acc;
    }

  std::vector<NodePtr> parents = bias ? std::vector<NodePtr>{x, w, bias}
                                      : std::vector<NodePtr>{x, w};
  return make_op(std::move(out), std::move(parents), [N, F, O](Node& nd) {
    Node& px = *nd.parents[0];
    Node& pw = *nd.parents[1];
    Node* pb = nd.parents.size() > 2 ? nd.parents[2].get() : nullptr;
    if (px.requires_grad) px.ensure_grad();
    if (pw.requires_grad) pw.ensure_grad();
    if (pb && pb->requires_grad) pb->ensure_grad();
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o) {
        const double g = nd.grad.at2(n, o);
        if (g == 0.0) continue;
        if (pb && pb->requires_grad) pb->grad[o] += g;
        for (int f = 0; f < F; ++f) {
          if (pw.requires_grad) pw.grad.at2(o, f) += px.value.at2(n, f) * g;
          if (px.requires_grad) px.grad.at2(n, f) += pw.value.at2(o, f) * g;
        }
      }
  });
}

NodePtr mse_loss(const NodePtr& pred, const NodePtr& target) {
  require_same_shape(pred->value, target->value, "mse_loss");
  const std::size_t m = pred->value.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = pred->value[i] - target->value[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(m));
  return make_op(std::move(out), {pred, target}, [m](Node& nd) {
    Node& pp = *nd.parents[0];
    Node& pt = *nd.parents[1];
    const double scale = 2.0 / static_cast<double>(m) * nd.grad[0];
    if (pp.requires_grad) {
      pp.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        pp.grad[i] += scale * (pp.value[i] - pt.value[i]);
    }
    if (pt.requires_grad) {
      pt.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        pt.grad[i] -= scale * (pp.value[i] - pt.value[i]);
    }
  });
}

}  // namespace poseguide::nn
