#pragma once

#include "poseguide/flow_sampling.hpp"
#include "poseguide/image.hpp"
#include "poseguide/motion_field.hpp"

// Brute-force reference implementations used only by the invariant
// suite and tests. They share data types with the library but none of
// its solver/transform code paths.
namespace poseguide::oracles {

// Plain Jacobi fixed-point iteration of the edge-aware harmonic system,
// run to `tol` (max per-pixel update) or `max_sweeps`.
MotionFieldStack propagate_fixed_point(const ImageD& reference, const SparseFlow& constraints,
                                       double beta, double tol = 1e-9,
                                       long max_sweeps = 200000);

// All-pairs O(pixels x edges) Euclidean distance transform.
DistanceMap distance_map_all_pairs(const EdgeMap& edges);

}  // namespace poseguide::oracles
