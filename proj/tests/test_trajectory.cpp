#include <doctest.h>

#include <cmath>

#include "poseguide/rng.hpp"
#include "poseguide/trajectory.hpp"

using namespace poseguide;

namespace {

PoseSequence make_sequence(int keypoints, const std::vector<std::vector<Keypoint>>& frames,
                           int width = 100, int height = 100) {
  PoseSequence seq;
  seq.width = width;
  seq.height = height;
  seq.keypoint_count = keypoints;
  for (std::size_t n = 0; n < frames.size(); ++n)
    seq.frames.push_back({static_cast<int>(n), frames[n]});
  return seq;
}

TrajectoryMap random_valid_trajectory(int keypoints, int driven, Rng& rng) {
  TrajectoryMap traj;
  traj.keypoint_count = keypoints;
  traj.frame_count = driven + 1;
  const std::size_t total = static_cast<std::size_t>(keypoints) * traj.frame_count;
  traj.x.resize(total);
  traj.y.resize(total);
  traj.valid.assign(total, 1);
  for (std::size_t i = 0; i < total; ++i) {
    traj.x[i] = rng.uniform(-50.0, 150.0);
    traj.y[i] = rng.uniform(-50.0, 150.0);
  }
  return traj;
}

}  // namespace

TEST_CASE("confidence gating thresholds the validity mask") {
  const PoseSequence seq = make_sequence(
      2, {{{0, 0, 0.9}, {1, 1, 0.9}}, {{2, 2, 0.5}, {3, 3, 0.2}}});

  SUBCASE("threshold 0 keeps everything") {
    const TrajectoryMap traj = build_trajectory(seq, 0.0);
    for (std::size_t i = 0; i < traj.valid.size(); ++i) CHECK(traj.valid[i] == 1);
  }
  SUBCASE("threshold 1 with all conf below drops everything") {
    const TrajectoryMap traj = build_trajectory(seq, 1.0);
    for (std::size_t i = 0; i < traj.valid.size(); ++i) CHECK(traj.valid[i] == 0);
  }
  SUBCASE("per-keypoint comparison at 0.3") {
    const TrajectoryMap traj = build_trajectory(seq, 0.3);
    CHECK(traj.is_valid(0, 1));
    CHECK(!traj.is_valid(1, 1));
  }
  SUBCASE("coordinates are copied verbatim") {
    const TrajectoryMap traj = build_trajectory(seq, 0.3);
    CHECK(traj.x[traj.idx(1, 1)] == 3.0);
    CHECK(traj.y[traj.idx(0, 1)] == 2.0);
  }
  CHECK_THROWS_AS(build_trajectory(seq, 1.5), ParamError);
}

TEST_CASE("track matrix subtracts consecutive frames") {
  const PoseSequence seq = make_sequence(
      1, {{{0, 0, 1.0}}, {{3, 4, 1.0}}, {{3, 4, 1.0}}});
  const TrackMatrix track = track_matrix(build_trajectory(seq, 0.3));
  CHECK(track.dx[track.idx(0, 1)] == 3.0);
  CHECK(track.dy[track.idx(0, 1)] == 4.0);
  CHECK(track.dx[track.idx(0, 2)] == 0.0);
  CHECK(track.dy[track.idx(0, 2)] == 0.0);
}

TEST_CASE("static keypoints produce all-zero track entries") {
  const PoseSequence seq = make_sequence(1, {{{7, 9, 1.0}}, {{7, 9, 1.0}}, {{7, 9, 1.0}}});
  const TrackMatrix track = track_matrix(build_trajectory(seq, 0.3));
  for (int n = 1; n <= 2; ++n) {
    CHECK(track.is_valid(0, n));
    CHECK(track.dx[track.idx(0, n)] == 0.0);
    CHECK(track.dy[track.idx(0, n)] == 0.0);
  }
}

TEST_CASE("an invalid middle frame masks both adjacent track entries") {
  const PoseSequence seq = make_sequence(
      1, {{{0, 0, 1.0}}, {{1, 1, 0.1}}, {{2, 2, 1.0}}});
  const TrackMatrix track = track_matrix(build_trajectory(seq, 0.3));
  CHECK(!track.is_valid(0, 1));
  CHECK(!track.is_valid(0, 2));
}

TEST_CASE("reference displacements subtract frame 0") {
  const PoseSequence seq = make_sequence(1, {{{0, 0, 1.0}}, {{3, 4, 1.0}}, {{5, 5, 1.0}}});
  const RefDisplacement ref = reference_displacements(build_trajectory(seq, 0.3));
  CHECK(ref.dx[ref.idx(0, 1)] == 3.0);
  CHECK(ref.dy[ref.idx(0, 1)] == 4.0);
  CHECK(ref.dx[ref.idx(0, 2)] == 5.0);
  CHECK(ref.dy[ref.idx(0, 2)] == 5.0);
}

TEST_CASE("invalid reference keypoint masks every displacement of that keypoint") {
  const PoseSequence seq = make_sequence(
      2, {{{0, 0, 0.1}, {1, 1, 1.0}}, {{5, 5, 1.0}, {2, 2, 1.0}}});
  const RefDisplacement ref = reference_displacements(build_trajectory(seq, 0.3));
  CHECK(!ref.is_valid(0, 1));
  CHECK(ref.is_valid(1, 1));
}

TEST_CASE("telescoping: summed track entries equal the reference displacement") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const int k_count = rng.uniform_int(1, 8);
    const int driven = rng.uniform_int(1, 20);
    const TrajectoryMap traj = random_valid_trajectory(k_count, driven, rng);
    const TrackMatrix track = track_matrix(traj);
    const RefDisplacement ref = reference_displacements(traj);
    for (int k = 0; k < k_count; ++k) {
      double sx = 0.0, sy = 0.0;
      for (int n = 1; n <= driven; ++n) {
        sx += track.dx[track.idx(k, n)];
        sy += track.dy[track.idx(k, n)];
      }
      CHECK(std::abs(sx - ref.dx[ref.idx(k, driven)]) < 1e-6);
      CHECK(std::abs(sy - ref.dy[ref.idx(k, driven)]) < 1e-6);
    }
  }
}

TEST_CASE("translation equivariance: shifting all frames leaves displacements unchanged") {
  Rng rng(43);
  TrajectoryMap traj = random_valid_trajectory(4, 6, rng);
  TrajectoryMap shifted = traj;
  for (std::size_t i = 0; i < shifted.x.size(); ++i) {
    shifted.x[i] += 17.25;
    shifted.y[i] -= 4.5;
  }
  const TrackMatrix ta = track_matrix(traj), tb = track_matrix(shifted);
  const RefDisplacement ra = reference_displacements(traj), rb = reference_displacements(shifted);
  for (std::size_t i = 0; i < ta.dx.size(); ++i) {
    CHECK(ta.dx[i] == doctest::Approx(tb.dx[i]).epsilon(1e-12));
    CHECK(ta.dy[i] == doctest::Approx(tb.dy[i]).epsilon(1e-12));
    CHECK(ra.dx[i] == doctest::Approx(rb.dx[i]).epsilon(1e-12));
    CHECK(ra.dy[i] == doctest::Approx(rb.dy[i]).epsilon(1e-12));
  }
}

TEST_CASE("reversal antisymmetry: reversing frames negates and reverses track entries") {
  Rng rng(47);
  const TrajectoryMap traj = random_valid_trajectory(3, 5, rng);
  TrajectoryMap rev = traj;
  const int frames = traj.frame_count;
  for (int k = 0; k < traj.keypoint_count; ++k)
    for (int n = 0; n < frames; ++n) {
      rev.x[rev.idx(k, n)] = traj.x[traj.idx(k, frames - 1 - n)];
      rev.y[rev.idx(k, n)] = traj.y[traj.idx(k, frames - 1 - n)];
    }
  const TrackMatrix ta = track_matrix(traj), tb = track_matrix(rev);
  for (int k = 0; k < traj.keypoint_count; ++k)
    for (int n = 1; n < frames; ++n) {
      CHECK(tb.dx[tb.idx(k, n)] == -ta.dx[ta.idx(k, frames - n)]);
      CHECK(tb.dy[tb.idx(k, n)] == -ta.dy[ta.idx(k, frames - n)]);
    }
}
