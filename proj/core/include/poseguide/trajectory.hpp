#pragma once

#include <cstdint>
#include <vector>

#include "poseguide/pose.hpp"

namespace poseguide {

// Keypoint trajectories across all frames (frame 0 = reference), with a
// confidence-gated validity mask. Coordinates are copied verbatim from
// the pose sequence; only the mask changes with the threshold.
struct TrajectoryMap {
  int keypoint_count = 0;  // K
  int frame_count = 0;     // N + 1, includes the reference frame

  // Indexed [k][n] row-major: k * frame_count + n.
  std::vector<double> x, y;
  std::vector<std::uint8_t> valid;

  int driven_frames() const { return frame_count - 1; }
  std::size_t idx(int k, int n) const {
    return static_cast<std::size_t>(k) * frame_count + n;
  }
  bool is_valid(int k, int n) const { return valid[idx(k, n)] != 0; }
};

// Per-frame, per-keypoint displacements with a validity mask. Entries
// exist for driven frames n = 1..N, stored at n-1.
struct DisplacementEntries {
  int keypoint_count = 0;  // K
  int driven_frames = 0;   // N

  // Indexed [k][n-1] row-major: k * driven_frames + (n - 1).
  std::vector<double> dx, dy;
  std::vector<std::uint8_t> valid;

  std::size_t idx(int k, int n) const {
    return static_cast<std::size_t>(k) * driven_frames + (n - 1);
  }
  bool is_valid(int k, int n) const { return valid[idx(k, n)] != 0; }
};

// Frame-to-frame displacement (x^k_n - x^k_{n-1}); entry (k, n) is valid
// only when frames n-1 and n are both valid for keypoint k. This is the
// training-time representation.
struct TrackMatrix : DisplacementEntries {};

// Displacement from the reference frame (x^k_n - x^k_0); entry (k, n)
// is valid only when frames 0 and n are both valid. This is the
// inference-time representation that anchors every field at frame 0.
struct RefDisplacement : DisplacementEntries {};

// Copies coordinates and gates validity: valid[k][n] iff conf >= threshold.
TrajectoryMap build_trajectory(const PoseSequence& seq, double conf_threshold = 0.3);

TrackMatrix track_matrix(const TrajectoryMap& traj);

RefDisplacement reference_displacements(const TrajectoryMap& traj);

}  // namespace poseguide
