#include "poseguide/motion_field.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "poseguide/flo_io.hpp"
#include "poseguide/png_io.hpp"

namespace poseguide {

namespace {

// Splat anchor: TrackMatrix displacements originate at the frame n-1
// keypoint position, RefDisplacement ones at the frame 0 position.
MotionFieldStack rasterize_impl(const DisplacementEntries& disp, const TrajectoryMap& traj,
                                int height, int width, double sigma, bool anchor_at_reference) {
  if (height <= 0 || width <= 0)
    throw ShapeError("rasterize_sparse_field: image dimensions must be positive");
  if (sigma <= 0.0) throw ParamError("rasterize_sparse_field: sigma must be > 0");
  if (disp.keypoint_count != traj.keypoint_count || disp.driven_frames != traj.driven_frames())
    throw ShapeError("rasterize_sparse_field: displacement/trajectory shape mismatch");

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  const int n_frames = disp.driven_frames;

  MotionFieldStack field(n_frames, height, width);
  std::vector<double> acc_u(static_cast<std::size_t>(height) * width);
  std::vector<double> acc_v(static_cast<std::size_t>(height) * width);

  for (int n = 1; n <= n_frames; ++n) {
    std::fill(acc_u.begin(), acc_u.end(), 0.0);
    std::fill(acc_v.begin(), acc_v.end(), 0.0);

    for (int k = 0; k < disp.keypoint_count; ++k) {
      if (!disp.is_valid(k, n)) continue;
      const int anchor_frame = anchor_at_reference ? 0 : n - 1;
      const double ax = traj.x[traj.idx(k, anchor_frame)];
      const double ay = traj.y[traj.idx(k, anchor_frame)];
      const int cx = std::clamp(static_cast<int>(std::lround(ax)), 0, width - 1);
      const int cy = std::clamp(static_cast<int>(std::lround(ay)), 0, height - 1);
      const double u = disp.dx[disp.idx(k, n)];
      const double v = disp.dy[disp.idx(k, n)];

      const int y0 = std::max(0, cy - radius), y1 = std::min(height - 1, cy + radius);
      const int x0 = std::max(0, cx - radius), x1 = std::min(width - 1, cx + radius);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double d2 = static_cast<double>(x - cx) * (x - cx) +
                            static_cast<double>(y - cy) * (y - cy);
          const double w = std::exp(-d2 * inv_two_sigma_sq);
          acc_u[static_cast<std::size_t>(y) * width + x] += u * w;
          acc_v[static_cast<std::size_t>(y) * width + x] += v * w;
        }
      }
    }

    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        field.at(n - 1, 0, y, x) = static_cast<float>(acc_u[static_cast<std::size_t>(y) * width + x]);
        field.at(n - 1, 1, y, x) = static_cast<float>(acc_v[static_cast<std::size_t>(y) * width + x]);
      }
  }
  return field;
}

constexpr double kWeightFloor = 1e-12;

struct EdgeWeights {
  // horizontal[y*W + x]: weight between (x, y) and (x+1, y)
  // vertical[y*W + x]:   weight between (x, y) and (x, y+1)
  std::vector<double> horizontal, vertical;
};

EdgeWeights edge_weights(const ImageD& ref, double beta) {
  const int h = ref.height(), w = ref.width(), c = ref.channels();
  EdgeWeights ew;
  ew.horizontal.assign(static_cast<std::size_t>(h) * w, 0.0);
  ew.vertical.assign(static_cast<std::size_t>(h) * w, 0.0);
  auto color_dist_sq = [&](int y0, int x0, int y1, int x1) {
    double d2 = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const double d = ref.at(ch, y0, x0) - ref.at(ch, y1, x1);
      d2 += d * d;
    }
    return d2;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w)
        ew.horizontal[static_cast<std::size_t>(y) * w + x] =
            std::max(std::exp(-color_dist_sq(y, x, y, x + 1) / beta), kWeightFloor);
      if (y + 1 < h)
        ew.vertical[static_cast<std::size_t>(y) * w + x] =
            std::max(std::exp(-color_dist_sq(y, x, y + 1, x) / beta), kWeightFloor);
    }
  return ew;
}

// Reduced SPD system over non-constraint pixels only.
struct ReducedSystem {
  int h = 0, w = 0;
  std::vector<int> unknown_id;   // pixel -> unknown index or -1
  std::vector<int> pixel_of;     // unknown index -> pixel
  std::vector<double> degree;    // per unknown, sum of incident weights
  const EdgeWeights* weights = nullptr;

  double weight_between(int p, int q) const {
    // p and q are 4-adjacent pixel indices.
    const int py = p / w, px = p % w;
    const int qy = q / w, qx = q % w;
    if (py == qy) return weights->horizontal[static_cast<std::size_t>(py) * w + std::min(px, qx)];
    return weights->vertical[static_cast<std::size_t>(std::min(py, qy)) * w + px];
  }

  template <typename Fn>
  void for_each_neighbor(int p, Fn&& fn) const {
    const int py = p / w, px = p % w;
    if (px > 0) fn(p - 1);
    if (px + 1 < w) fn(p + 1);
    if (py > 0) fn(p - w);
    if (py + 1 < h) fn(p + w);
  }

  // y = A x where A = degree - (weights between unknowns)
  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    for (std::size_t i = 0; i < pixel_of.size(); ++i) {
      const int p = pixel_of[i];
      double acc = degree[i] * x[i];
      for_each_neighbor(p, [&](int q) {
        const int j = unknown_id[q];
        if (j >= 0) acc -= weight_between(p, q) * x[j];
      });
      y[i] = acc;
    }
  }
};

// Jacobi-preconditioned conjugate gradients. The stopping rule is the
// fixed-point residual |x_p - weighted_avg(neighbors)| = |r_p| / deg_p;
// convergence signals from the recursively updated residual are
// confirmed against the true residual before stopping. Diagonal
// preconditioning matters here: edge weights span many orders of
// magnitude once the image has strong edges.
void solve_channel(const ReducedSystem& sys, const std::vector<double>& rhs,
                   std::vector<double>& x, double tol, long max_iters,
                   PropagationStats& stats) {
  const std::size_t n = rhs.size();
  std::vector<double> r(n), z(n), p(n), ap(n);

  auto compute_true_residual = [&]() {
    sys.apply(x, ap);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rhs[i] - ap[i];
      worst = std::max(worst, std::abs(r[i]) / sys.degree[i]);
    }
    return worst;
  };
  auto restart = [&]() {
    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = r[i] / sys.degree[i];
      p[i] = z[i];
      rz += r[i] * z[i];
    }
    return rz;
  };

  double worst = compute_true_residual();
  double rz = restart();

  long iter = 0;
  while (worst >= tol && iter < max_iters) {
    sys.apply(p, ap);
    double pap = 0.0;
    for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
    if (pap <= 0.0) break;  // numerically exhausted
    const double alpha = rz / pap;
    double rz_next = 0.0;
    double recur_worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
      z[i] = r[i] / sys.degree[i];
      rz_next += r[i] * z[i];
      recur_worst = std::max(recur_worst, std::abs(z[i]));
    }
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    ++iter;
    worst = recur_worst;
    if (worst < tol) {
      worst = compute_true_residual();  // confirm against drift
      if (worst >= tol) rz = restart();
    }
  }
  stats.iterations += iter;
  stats.residual = std::max(stats.residual, compute_true_residual());
}

}  // namespace

MotionFieldStack rasterize_sparse_field(const TrackMatrix& disp, const TrajectoryMap& traj,
                                        int height, int width, double sigma) {
  return rasterize_impl(disp, traj, height, width, sigma, /*anchor_at_reference=*/false);
}

MotionFieldStack rasterize_sparse_field(const RefDisplacement& disp, const TrajectoryMap& traj,
                                        int height, int width, double sigma) {
  return rasterize_impl(disp, traj, height, width, sigma, /*anchor_at_reference=*/true);
}

MotionFieldStack propagate_dense(const ImageD& reference, const SparseFlow& constraints,
                                 const PropagatorParams& params, PropagationStats* stats) {
  if (constraints.points.empty()) throw ParamError("empty constraint set");
  if (params.beta <= 0.0) throw ParamError("propagator beta must be > 0");
  if (params.tol <= 0.0) throw ParamError("propagator tol must be > 0");
  const int h = constraints.height, w = constraints.width;
  if (h <= 0 || w <= 0) throw ShapeError("propagate_dense: constraint dims must be positive");
  if (reference.height() != h || reference.width() != w)
    throw ShapeError("propagate_dense: reference image dims do not match constraints");

  std::unordered_set<int> seen;
  for (const SparseConstraint& c : constraints.points) {
    if (c.x < 0 || c.x >= w || c.y < 0 || c.y >= h)
      throw ParamError("constraint pixel out of bounds");
    if (!seen.insert(c.y * w + c.x).second)
      throw ParamError("duplicate constraint position");
  }

  const long max_iters =
      params.max_iters > 0 ? params.max_iters : 10L * h * w;

  const EdgeWeights weights = edge_weights(reference, params.beta);

  ReducedSystem sys;
  sys.h = h;
  sys.w = w;
  sys.weights = &weights;
  sys.unknown_id.assign(static_cast<std::size_t>(h) * w, -1);
  std::vector<float> pinned_u(static_cast<std::size_t>(h) * w, 0.0f);
  std::vector<float> pinned_v(static_cast<std::size_t>(h) * w, 0.0f);
  std::vector<std::uint8_t> is_pinned(static_cast<std::size_t>(h) * w, 0);
  for (const SparseConstraint& c : constraints.points) {
    const int p = c.y * w + c.x;
    is_pinned[p] = 1;
    pinned_u[p] = c.u;
    pinned_v[p] = c.v;
  }
  for (int p = 0; p < h * w; ++p) {
    if (!is_pinned[p]) {
      sys.unknown_id[p] = static_cast<int>(sys.pixel_of.size());
      sys.pixel_of.push_back(p);
    }
  }
  sys.degree.assign(sys.pixel_of.size(), 0.0);
  for (std::size_t i = 0; i < sys.pixel_of.size(); ++i) {
    const int p = sys.pixel_of[i];
    double deg = 0.0;
    sys.for_each_neighbor(p, [&](int q) { deg += sys.weight_between(p, q); });
    sys.degree[i] = deg;
  }

  MotionFieldStack out(1, h, w);
  PropagationStats local;
  local.converged = true;

  // Channel bounds for the final projection; the exact solution obeys
  // the maximum principle, so clamping only moves the iterate closer.
  float lo[2], hi[2];
  lo[0] = lo[1] = std::numeric_limits<float>::max();
  hi[0] = hi[1] = std::numeric_limits<float>::lowest();
  for (const SparseConstraint& c : constraints.points) {
    lo[0] = std::min(lo[0], c.u); hi[0] = std::max(hi[0], c.u);
    lo[1] = std::min(lo[1], c.v); hi[1] = std::max(hi[1], c.v);
  }

  for (int ch = 0; ch < 2; ++ch) {
    const std::vector<float>& pinned = ch == 0 ? pinned_u : pinned_v;

    if (!sys.pixel_of.empty()) {
      std::vector<double> rhs(sys.pixel_of.size(), 0.0);
      for (std::size_t i = 0; i < sys.pixel_of.size(); ++i) {
        const int p = sys.pixel_of[i];
        double b = 0.0;
        sys.for_each_neighbor(p, [&](int q) {
          if (is_pinned[q]) b += sys.weight_between(p, q) * pinned[q];
        });
        rhs[i] = b;
      }

      // Start from the constraint mean; uniform constraint sets then
      // converge in the first residual check.
      double mean = 0.0;
      for (const SparseConstraint& c : constraints.points)
        mean += ch == 0 ? c.u : c.v;
      mean /= static_cast<double>(constraints.points.size());
      std::vector<double> x(sys.pixel_of.size(), mean);

      PropagationStats ch_stats;
      solve_channel(sys, rhs, x, params.tol, max_iters, ch_stats);
      local.iterations += ch_stats.iterations;
      local.residual = std::max(local.residual, ch_stats.residual);
      if (ch_stats.residual >= params.tol) local.converged = false;

      for (std::size_t i = 0; i < sys.pixel_of.size(); ++i) {
        const int p = sys.pixel_of[i];
        const float v = std::clamp(static_cast<float>(x[i]), lo[ch], hi[ch]);
        out.at(0, ch, p / w, p % w) = v;
      }
    }
    for (int p = 0; p < h * w; ++p)
      if (is_pinned[p]) out.at(0, ch, p / w, p % w) = pinned[p];
  }

  if (stats) *stats = local;
  return out;
}

SparseFlow constraints_from_reference(const RefDisplacement& disp, const TrajectoryMap& traj,
                                      int frame, int height, int width) {
  if (frame < 1 || frame > disp.driven_frames)
    throw IndexError("constraints_from_reference: frame " + std::to_string(frame) +
                     " out of range [1, " + std::to_string(disp.driven_frames) + "]");
  SparseFlow sf;
  sf.width = width;
  sf.height = height;
  std::unordered_set<int> occupied;
  for (int k = 0; k < disp.keypoint_count; ++k) {
    if (!disp.is_valid(k, frame)) continue;
    const double ax = traj.x[traj.idx(k, 0)];
    const double ay = traj.y[traj.idx(k, 0)];
    const int px = std::clamp(static_cast<int>(std::lround(ax)), 0, width - 1);
    const int py = std::clamp(static_cast<int>(std::lround(ay)), 0, height - 1);
    if (!occupied.insert(py * width + px).second) continue;  // smallest k wins
    sf.points.push_back({px, py, static_cast<float>(disp.dx[disp.idx(k, frame)]),
                         static_cast<float>(disp.dy[disp.idx(k, frame)])});
  }
  return sf;
}

MotionFieldStack dense_field_stack(const ImageD& reference, const RefDisplacement& disp,
                                   const TrajectoryMap& traj, const PropagatorParams& params,
                                   std::vector<PropagationStats>* stats) {
  const int h = reference.height(), w = reference.width();
  const int n_frames = disp.driven_frames;
  if (n_frames <= 0) throw ShapeError("dense_field_stack: no driven frames");

  MotionFieldStack out(n_frames, h, w);
  if (stats) stats->assign(n_frames, {});
  for (int n = 1; n <= n_frames; ++n) {
    const SparseFlow sf = constraints_from_reference(disp, traj, n, h, w);
    PropagationStats frame_stats;
    const MotionFieldStack field = propagate_dense(reference, sf, params, &frame_stats);
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(n - 1, c, y, x) = field.at(0, c, y, x);
    if (stats) (*stats)[n - 1] = frame_stats;
  }
  return out;
}

void export_constraints(const SparseFlow& constraints, const std::filesystem::path& flo_path,
                        const std::filesystem::path& mask_png_path) {
  if (constraints.points.empty()) throw ParamError("empty constraint set");
  const int h = constraints.height, w = constraints.width;
  MotionFieldStack field(1, h, w);
  ImageU8 mask(3, h, w, 0);
  for (const SparseConstraint& c : constraints.points) {
    if (c.x < 0 || c.x >= w || c.y < 0 || c.y >= h)
      throw ParamError("constraint pixel out of bounds");
    field.at(0, 0, c.y, c.x) = c.u;
    field.at(0, 1, c.y, c.x) = c.v;
    mask.at(0, c.y, c.x) = 255;
    mask.at(1, c.y, c.x) = 255;
    mask.at(2, c.y, c.x) = 255;
  }
  save_flow(field, 0, flo_path);
  write_png_rgb(mask, mask_png_path);
}

}  // namespace poseguide
