#pragma once

#include <cstdint>
#include <vector>

#include "poseguide/image.hpp"
#include "poseguide/motion_field.hpp"

namespace poseguide {

// Binarized motion-edge map from per-channel Sobel gradients.
struct EdgeMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> edge;  // 1 = edge pixel

  bool at(int y, int x) const { return edge[static_cast<std::size_t>(y) * width + x] != 0; }
  int count() const;
};

// Exact Euclidean distance to the nearest edge pixel.
struct DistanceMap {
  int height = 0;
  int width = 0;
  std::vector<double> dist;

  double at(int y, int x) const { return dist[static_cast<std::size_t>(y) * width + x]; }
};

// Sobel gradient magnitude per flow channel (u and v), combined by
// Euclidean norm, binarized at `edge_threshold` (pixel >= threshold is
// an edge). Borders use replicate padding.
EdgeMap flow_edges(const MotionFieldStack& flow, int frame, double edge_threshold = 1.0);

// Exact Euclidean distance transform of the edge set. An empty edge set
// falls back to each pixel's distance to the nearest image border
// (border pixels get 0), which keeps static clips usable.
DistanceMap watershed_distance_map(const EdgeMap& edges);

// Strict-greater NMS over K_f × K_f windows; ties resolve to the
// earliest pixel in row-major order (later equal pixels are suppressed).
// Pixels on the outermost 1-px border are never selected, and selected
// pixels must have distance > 0. Each selected pixel carries the dense
// flow vector at that pixel, exactly.
SparseFlow sample_keypoints_nms(const DistanceMap& dist, int kernel_size,
                                const MotionFieldStack& flow, int frame);

// Full watershed sampling pipeline: edges -> distance map -> NMS.
SparseFlow sample_sparse_flow(const MotionFieldStack& flow, int frame,
                              double edge_threshold = 1.0, int kernel_size = 5);

}  // namespace poseguide
