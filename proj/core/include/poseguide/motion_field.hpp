#pragma once

#include <filesystem>
#include <vector>

#include "poseguide/image.hpp"
#include "poseguide/trajectory.hpp"

namespace poseguide {

// Pixel-anchored flow constraints. Positions are unique integer pixels
// inside the image.
struct SparseConstraint {
  int x = 0;
  int y = 0;
  float u = 0.0f;
  float v = 0.0f;
};

struct SparseFlow {
  int width = 0;
  int height = 0;
  std::vector<SparseConstraint> points;
};

struct PropagatorParams {
  double beta = 0.01;   // edge sensitivity of w_pq = exp(-||I_p - I_q||^2 / beta)
  double tol = 1e-5;    // max fixed-point residual at which to stop
  long max_iters = 0;   // 0 -> 10 * H * W sweep-equivalents
};

struct PropagationStats {
  bool converged = false;
  long iterations = 0;
  double residual = 0.0;
};

// Splats each valid keypoint displacement with a peak-normalized
// Gaussian (center weight exactly 1, window radius ceil(3*sigma)).
// Overlapping splats sum; untouched pixels stay (0, 0). TrackMatrix
// entries splat at the keypoint's frame n-1 position, RefDisplacement
// entries at the frame 0 position; centers are rounded to the nearest
// pixel and clamped into bounds. One output frame per driven frame.
MotionFieldStack rasterize_sparse_field(const TrackMatrix& disp, const TrajectoryMap& traj,
                                        int height, int width, double sigma = 3.0);
MotionFieldStack rasterize_sparse_field(const RefDisplacement& disp, const TrajectoryMap& traj,
                                        int height, int width, double sigma = 3.0);

// Edge-aware harmonic interpolation, the deterministic stand-in for the
// learned conditional motion propagation model. Constraint pixels are
// Dirichlet values returned exactly; every other pixel converges to the
// weighted average of its 4-neighbors with weights
// w_pq = exp(-||I_p - I_q||^2 / beta) (colors in [0,1]^3, weights
// floored at 1e-12 so the graph stays connected). Solved per channel by
// conjugate gradients until the max fixed-point residual drops below
// params.tol or the iteration budget runs out; non-convergence returns
// the best iterate with stats->converged = false, not an error.
MotionFieldStack propagate_dense(const ImageD& reference, const SparseFlow& constraints,
                                 const PropagatorParams& params = {},
                                 PropagationStats* stats = nullptr);

// Builds the per-frame constraint set from valid RefDisplacement entries
// anchored at frame-0 keypoint positions. Multiple keypoints rounding to
// the same pixel keep the smallest keypoint index.
SparseFlow constraints_from_reference(const RefDisplacement& disp, const TrajectoryMap& traj,
                                      int frame, int height, int width);

// Runs propagate_dense for every driven frame.
MotionFieldStack dense_field_stack(const ImageD& reference, const RefDisplacement& disp,
                                   const TrajectoryMap& traj,
                                   const PropagatorParams& params = {},
                                   std::vector<PropagationStats>* stats = nullptr);

// External-CMP exchange: constraints as a .flo that is zero except at
// constraint pixels plus a sidecar mask PNG (white = constrained).
void export_constraints(const SparseFlow& constraints, const std::filesystem::path& flo_path,
                        const std::filesystem::path& mask_png_path);

}  // namespace poseguide
