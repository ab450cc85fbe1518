#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "poseguide/correspondence.hpp"
#include "poseguide/rng.hpp"

using namespace poseguide;
namespace fs = std::filesystem;

namespace {

// Synthetic formula map: channel c at (yf, xf) = yf + xf + c.
FeatureMap formula_features(int dp, int hf, int wf, int src_h, int src_w) {
  FeatureMap fm;
  fm.dp = dp;
  fm.hf = hf;
  fm.wf = wf;
  fm.src_height = src_h;
  fm.src_width = src_w;
  fm.data.resize(static_cast<std::size_t>(dp) * hf * wf);
  for (int c = 0; c < dp; ++c)
    for (int y = 0; y < hf; ++y)
      for (int x = 0; x < wf; ++x) fm.at(c, y, x) = static_cast<float>(y + x + c);
  return fm;
}

TrajectoryMap simple_trajectory(std::vector<double> xs, std::vector<double> ys,
                                std::vector<std::uint8_t> valid, int keypoints) {
  TrajectoryMap traj;
  traj.keypoint_count = keypoints;
  traj.frame_count = static_cast<int>(xs.size()) / keypoints;
  traj.x = std::move(xs);
  traj.y = std::move(ys);
  traj.valid = std::move(valid);
  return traj;
}

}  // namespace

TEST_CASE("point embeddings sample the feature column at the frame-0 location") {
  const FeatureMap fm = formula_features(4, 16, 16, 16, 16);
  // keypoint 0 at (x=2, y=3): embedding = [5, 6, 7, 8].
  const TrajectoryMap traj = simple_trajectory({2, 2}, {3, 3}, {1, 1}, 1);
  const PointEmbeddings emb = extract_point_embeddings(fm, traj);
  REQUIRE(emb.is_valid(0));
  for (int c = 0; c < 4; ++c) CHECK(emb.vec(0)[c] == doctest::Approx(5.0 + c));
}

TEST_CASE("invalid reference keypoints produce invalid embeddings") {
  const FeatureMap fm = formula_features(4, 8, 8, 8, 8);
  const TrajectoryMap traj = simple_trajectory({2, 2, 4, 4}, {3, 3, 4, 4}, {0, 1, 1, 1}, 2);
  const PointEmbeddings emb = extract_point_embeddings(fm, traj);
  CHECK(!emb.is_valid(0));
  CHECK(emb.is_valid(1));
}

TEST_CASE("feature lookups scale coordinates into a half-resolution grid") {
  const FeatureMap fm = formula_features(3, 8, 8, 16, 16);  // H_f = H/2
  const TrajectoryMap traj = simple_trajectory({10, 10}, {6, 6}, {1, 1}, 1);
  const PointEmbeddings emb = extract_point_embeddings(fm, traj);
  // (x=10, y=6) halves to (5, 3): embedding c = 3 + 5 + c.
  for (int c = 0; c < 3; ++c) CHECK(emb.vec(0)[c] == doctest::Approx(8.0 + c));
}

TEST_CASE("correspondence map places the embedding at the rounded trajectory pixel") {
  const FeatureMap fm = formula_features(4, 16, 16, 16, 16);
  const TrajectoryMap traj = simple_trajectory({5, 7}, {5, 9}, {1, 1}, 1);
  const PointEmbeddings emb = extract_point_embeddings(fm, traj);
  const CorrespondenceStack stack = build_correspondence_map(emb, traj, 16, 16);
  REQUIRE(stack.frames == 1);
  CHECK(stack.nonzero_pixels(0) == 1);
  CHECK(stack.entries[0][0].x == 7);
  CHECK(stack.entries[0][0].y == 9);
  const ImageF dense = stack.dense_frame(0);
  for (int c = 0; c < 4; ++c) {
    CHECK(dense.at(c, 9, 7) == emb.vec(0)[c]);
  }
  // Everything else is zero.
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < dense.size(); ++i) nonzero += dense.data()[i] != 0.0f;
  CHECK(nonzero == 4);
}

TEST_CASE("keypoints invalid in a frame contribute nothing that frame") {
  const FeatureMap fm = formula_features(2, 8, 8, 8, 8);
  const TrajectoryMap traj = simple_trajectory({1, 2, 3, 4}, {1, 2, 3, 4}, {1, 0, 1, 1}, 2);
  const PointEmbeddings emb = extract_point_embeddings(fm, traj);
  const CorrespondenceStack stack = build_correspondence_map(emb, traj, 8, 8);
  CHECK(stack.nonzero_pixels(0) == 1);  // only keypoint 1 is valid at frame 1
  CHECK(stack.entries[0][0].keypoint == 1);
}

TEST_CASE("pixel collisions keep the smallest keypoint index") {
  const FeatureMap fm = formula_features(2, 8, 8, 8, 8);
  // Both keypoints land on pixel (4, 4) at frame 1.
  const TrajectoryMap traj =
      simple_trajectory({0, 4.2, 7, 3.8}, {0, 4.0, 7, 4.4}, {1, 1, 1, 1}, 2);
  const PointEmbeddings emb = extract_point_embeddings(fm, traj);
  const CorrespondenceStack stack = build_correspondence_map(emb, traj, 8, 8);
  REQUIRE(stack.nonzero_pixels(0) == 1);
  CHECK(stack.entries[0][0].keypoint == 0);
  CHECK(stack.entries[0][0].x == 4);
  CHECK(stack.entries[0][0].y == 4);
}

TEST_CASE("identity rescale equals build_correspondence_map") {
  Rng rng(13);
  SyntheticInjectiveProvider provider(8, 16, 16, 5);
  const FeatureMap fm = provider.make(32, 32);
  TrajectoryMap traj;
  traj.keypoint_count = 5;
  traj.frame_count = 4;
  const std::size_t total = 20;
  traj.x.resize(total);
  traj.y.resize(total);
  traj.valid.assign(total, 1);
  for (std::size_t i = 0; i < total; ++i) {
    traj.x[i] = rng.uniform(0.0, 31.0);
    traj.y[i] = rng.uniform(0.0, 31.0);
  }
  const PointEmbeddings emb = extract_point_embeddings(fm, traj);
  const CorrespondenceStack a = build_correspondence_map(emb, traj, 32, 32);
  const CorrespondenceStack b = rescale_correspondence(emb, traj, 32, 32, 32, 32);
  REQUIRE(a.frames == b.frames);
  for (int n = 0; n < a.frames; ++n) CHECK(a.dense_frame(n) == b.dense_frame(n));
}

TEST_CASE("rescaling a 16x16 keypoint at (8,8) to 4x4 lands at (2,2)") {
  const FeatureMap fm = formula_features(2, 16, 16, 16, 16);
  const TrajectoryMap traj = simple_trajectory({8, 8}, {8, 8}, {1, 1}, 1);
  const PointEmbeddings emb = extract_point_embeddings(fm, traj);
  const CorrespondenceStack level = rescale_correspondence(emb, traj, 4, 4, 16, 16);
  REQUIRE(level.nonzero_pixels(0) == 1);
  CHECK(level.entries[0][0].x == 2);
  CHECK(level.entries[0][0].y == 2);
}

TEST_CASE("coarser levels never gain nonzero pixels") {
  Rng rng(17);
  SyntheticInjectiveProvider provider(6, 24, 24, 3);
  const FeatureMap fm = provider.make(48, 48);
  for (int trial = 0; trial < 20; ++trial) {
    TrajectoryMap traj;
    traj.keypoint_count = rng.uniform_int(1, 12);
    traj.frame_count = rng.uniform_int(2, 5);
    const std::size_t total =
        static_cast<std::size_t>(traj.keypoint_count) * traj.frame_count;
    traj.x.resize(total);
    traj.y.resize(total);
    traj.valid.assign(total, 1);
    for (std::size_t i = 0; i < total; ++i) {
      traj.x[i] = rng.uniform(0.0, 47.0);
      traj.y[i] = rng.uniform(0.0, 47.0);
    }
    const PointEmbeddings emb = extract_point_embeddings(fm, traj);
    const CorrespondenceStack full = build_correspondence_map(emb, traj, 48, 48);
    for (int level = 24; level >= 6; level /= 2) {
      const CorrespondenceStack coarse =
          rescale_correspondence(emb, traj, level, level, 48, 48);
      for (int n = 0; n < full.frames; ++n)
        CHECK(coarse.nonzero_pixels(n) <= full.nonzero_pixels(n));
    }
  }
}

TEST_CASE("nonzero columns are bit-exact copies of the reference embeddings") {
  Rng rng(19);
  SyntheticInjectiveProvider provider(10, 16, 16, 23);
  const FeatureMap fm = provider.make(32, 32);
  TrajectoryMap traj;
  traj.keypoint_count = 6;
  traj.frame_count = 3;
  traj.x.resize(18);
  traj.y.resize(18);
  traj.valid.assign(18, 1);
  for (std::size_t i = 0; i < 18; ++i) {
    traj.x[i] = rng.uniform(0.0, 31.0);
    traj.y[i] = rng.uniform(0.0, 31.0);
  }
  const PointEmbeddings emb = extract_point_embeddings(fm, traj);
  const CorrespondenceStack stack = build_correspondence_map(emb, traj, 32, 32);
  for (int n = 0; n < stack.frames; ++n) {
    const ImageF dense = stack.dense_frame(n);
    for (const CorrespondenceEntry& e : stack.entries[n]) {
      for (int c = 0; c < stack.dp; ++c) {
        const float got = dense.at(c, e.y, e.x);
        const float want = emb.vec(e.keypoint)[c];
        CHECK(std::memcmp(&got, &want, sizeof(float)) == 0);
      }
    }
  }
}

TEST_CASE("self-retrieval returns the query point on injective features") {
  SyntheticInjectiveProvider provider(8, 10, 10, 29);
  const FeatureMap fm = provider.make(40, 40);
  Rng rng(23);
  for (int q = 0; q < 50; ++q) {
    PointLocation p{rng.uniform_int(0, 9), rng.uniform_int(0, 9)};
    const PointLocation got = retrieve_point(fm, p, fm);
    CHECK(got.x == p.x);
    CHECK(got.y == p.y);
  }
}

TEST_CASE("retrieval follows a spatial shift of the target features") {
  SyntheticInjectiveProvider provider(8, 12, 12, 31);
  const FeatureMap src = provider.make(48, 48);
  FeatureMap tgt = src;
  // Shift columns by +2 in x (wrapping the two rightmost columns).
  for (int c = 0; c < tgt.dp; ++c)
    for (int y = 0; y < tgt.hf; ++y)
      for (int x = 0; x < tgt.wf; ++x)
        tgt.at(c, y, (x + 2) % tgt.wf) = src.at(c, y, x);
  for (int x = 0; x < 9; ++x) {
    const PointLocation got = retrieve_point(src, {x, 5}, tgt);
    CHECK(got.x == x + 2);
    CHECK(got.y == 5);
  }
}

TEST_CASE("retrieval is invariant to positive scaling of either feature map") {
  SyntheticInjectiveProvider provider(8, 9, 9, 37);
  const FeatureMap src = provider.make(36, 36);
  FeatureMap scaled = src;
  for (float& v : scaled.data) v *= 7.5f;
  Rng rng(41);
  for (int q = 0; q < 25; ++q) {
    PointLocation p{rng.uniform_int(0, 8), rng.uniform_int(0, 8)};
    const PointLocation a = retrieve_point(src, p, src);
    const PointLocation b = retrieve_point(scaled, p, src);
    const PointLocation c = retrieve_point(src, p, scaled);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    CHECK(a.x == c.x);
    CHECK(a.y == c.y);
  }
}

TEST_CASE("constant features tie-break to (0,0); zero query is rejected") {
  FeatureMap fm = formula_features(3, 6, 6, 6, 6);
  for (float& v : fm.data) v = 2.0f;
  const PointLocation got = retrieve_point(fm, {4, 4}, fm);
  CHECK(got.x == 0);
  CHECK(got.y == 0);

  FeatureMap zeros = fm;
  for (float& v : zeros.data) v = 0.0f;
  CHECK_THROWS_WITH_AS(retrieve_point(zeros, {1, 1}, fm), doctest::Contains("degenerate"),
                       ParamError);
}

TEST_CASE("feature files round-trip payload and header") {
  SyntheticInjectiveProvider provider(5, 7, 9, 43);
  const FeatureMap fm = provider.make(28, 36);
  const fs::path dir = fs::temp_directory_path() / "poseguide_test_corr";
  fs::create_directories(dir);
  const fs::path p = dir / "features.bin";
  write_feature_file(fm, p);
  const FeatureMap back = read_feature_file(p, 28, 36);
  CHECK(back.dp == 5);
  CHECK(back.hf == 7);
  CHECK(back.wf == 9);
  CHECK(back.src_height == 28);
  CHECK(back.data == fm.data);

  // Truncated payload is an I/O error.
  const fs::path q = dir / "short.bin";
  {
    std::ofstream out(q, std::ios::binary);
    out << R"({"dp":4,"h":8,"w":8})" << "\n";
    const float once = 1.0f;
    out.write(reinterpret_cast<const char*>(&once), sizeof(once));
  }
  CHECK_THROWS_AS(read_feature_file(q), IoError);
}
