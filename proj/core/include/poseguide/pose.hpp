#pragma once

#include <filesystem>
#include <vector>

#include "poseguide/errors.hpp"

namespace poseguide {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double conf = 0.0;  // in [0, 1]

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct PoseFrame {
  int index = 0;
  std::vector<Keypoint> keypoints;

  friend bool operator==(const PoseFrame&, const PoseFrame&) = default;
};

// Per-frame keypoint coordinates and confidences for K keypoints over
// N+1 frames. Frame 0 is the reference image's pose. Coordinates may lie
// outside the image (off-screen joints) but must be finite.
struct PoseSequence {
  int width = 0;
  int height = 0;
  int keypoint_count = 0;
  std::vector<PoseFrame> frames;  // sorted, indices 0..N contiguous

  // Number of driven frames N (frames past the reference).
  int driven_frames() const { return static_cast<int>(frames.size()) - 1; }

  // Re-checks every type invariant; throws ParseError on violation.
  void validate() const;

  friend bool operator==(const PoseSequence&, const PoseSequence&) = default;
};

// Reads a pose JSON file (schema: width, height, keypoint_count,
// frames[{index, keypoints[[x,y,conf],...]}]). Frames may appear in any
// order in the file; the result is sorted by index and fully validated.
// Low-confidence keypoints are preserved; filtering happens when the
// trajectory is built.
PoseSequence load_pose_sequence(const std::filesystem::path& path);

// Writes the same schema back. load(save(seq)) preserves every
// coordinate and confidence exactly.
void save_pose_sequence(const PoseSequence& seq, const std::filesystem::path& path);

}  // namespace poseguide
