#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "poseguide/image.hpp"
#include "poseguide/trajectory.hpp"

namespace poseguide {

// Dense feature grid of D_p channels at H_f × W_f, plus the source
// image dims so pixel coordinates can be mapped into feature cells.
struct FeatureMap {
  int dp = 0;
  int hf = 0;
  int wf = 0;
  int src_height = 0;
  int src_width = 0;
  std::vector<float> data;  // channel-major: [dp][hf][wf]

  float at(int c, int yf, int xf) const {
    return data[(static_cast<std::size_t>(c) * hf + yf) * wf + xf];
  }
  float& at(int c, int yf, int xf) {
    return data[(static_cast<std::size_t>(c) * hf + yf) * wf + xf];
  }
};

// One D_p-vector per keypoint, sampled at the reference (frame 0)
// trajectory coordinates; vector k is valid iff the reference keypoint
// is valid.
struct PointEmbeddings {
  int dp = 0;
  int keypoint_count = 0;
  std::vector<float> values;  // [k][dp]
  std::vector<std::uint8_t> valid;

  const float* vec(int k) const { return values.data() + static_cast<std::size_t>(k) * dp; }
  bool is_valid(int k) const { return valid[k] != 0; }
};

// Sparse per-frame map that places reference point embeddings at
// trajectory coordinates; zero almost everywhere. Stored sparse; dense
// frames are materialized on demand for the encoders.
struct CorrespondenceEntry {
  int x = 0;
  int y = 0;
  int keypoint = 0;
};

struct CorrespondenceStack {
  int frames = 0;  // driven frames, n = 1..N stored at n-1
  int dp = 0;
  int height = 0;
  int width = 0;
  PointEmbeddings embeddings;
  std::vector<std::vector<CorrespondenceEntry>> entries;  // per frame, unique pixels

  // D_p × H × W dense frame with embeddings written at their pixels.
  ImageF dense_frame(int n) const;
  std::size_t nonzero_pixels(int n) const { return entries[n].size(); }
};

struct PointLocation {
  int x = 0;
  int y = 0;
};

// Samples the feature column at each valid keypoint's frame-0 location.
// Pixel coordinates are scaled by (W_f/W, H_f/H), rounded to nearest,
// and clamped into the feature grid.
PointEmbeddings extract_point_embeddings(const FeatureMap& features, const TrajectoryMap& traj);

// Assigns embedding k at (round(x^k_n), round(y^k_n)) clamped in-bounds
// for every driven frame where both the reference and frame-n keypoint
// are valid; pixel collisions keep the smallest keypoint index.
CorrespondenceStack build_correspondence_map(const PointEmbeddings& emb,
                                             const TrajectoryMap& traj, int height, int width);

// Level map rebuilt directly from trajectory coordinates scaled by
// (W_l/W, H_l/H) — re-quantization, not pooling — so nonzero values stay
// bit-for-bit equal to the reference embeddings at the coarser grid.
CorrespondenceStack rescale_correspondence(const PointEmbeddings& emb, const TrajectoryMap& traj,
                                           int level_height, int level_width, int full_height,
                                           int full_width);

// Fig.-7-style retrieval: argmax over target grid cells of cosine
// similarity with the source column at src. Ties resolve to the smallest
// row-major index; zero-norm target columns can never win.
PointLocation retrieve_point(const FeatureMap& src_features, PointLocation src,
                             const FeatureMap& tgt_features);

// Feature providers: the real DIFT extractor stays external; the repo
// ships a synthetic injective provider for tests plus a toy-UNet-based
// one (see guidance.hpp) and this file-exchange path.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual FeatureMap extract(const ImageD& image) = 0;
};

// Deterministic features whose columns are pairwise non-parallel, so
// cosine retrieval is exact: channels 0/1 sweep distinct directions on
// the unit circle, the rest are seeded pseudo-random filler.
class SyntheticInjectiveProvider : public FeatureProvider {
 public:
  SyntheticInjectiveProvider(int dp, int hf, int wf, std::uint64_t seed = 17);
  FeatureMap extract(const ImageD& image) override;

  // Grid-only variant for tests that have no backing image.
  FeatureMap make(int src_height, int src_width) const;

 private:
  int dp_, hf_, wf_;
  std::uint64_t seed_;
};

// Exchange format: one JSON header line {"dp":..,"h":..,"w":..} followed
// by the raw little-endian float32 payload, channel-major.
void write_feature_file(const FeatureMap& features, const std::filesystem::path& path);
FeatureMap read_feature_file(const std::filesystem::path& path, int src_height = 0,
                             int src_width = 0);

}  // namespace poseguide
