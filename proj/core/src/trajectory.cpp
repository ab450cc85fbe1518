#include "poseguide/trajectory.hpp"

namespace poseguide {

TrajectoryMap build_trajectory(const PoseSequence& seq, double conf_threshold) {
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0))
    throw ParamError("conf_threshold must lie in [0, 1]");
  seq.validate();

  TrajectoryMap traj;
  traj.keypoint_count = seq.keypoint_count;
  traj.frame_count = static_cast<int>(seq.frames.size());
  const std::size_t total = static_cast<std::size_t>(traj.keypoint_count) * traj.frame_count;
  traj.x.resize(total);
  traj.y.resize(total);
  traj.valid.resize(total);

  for (int k = 0; k < traj.keypoint_count; ++k) {
    for (int n = 0; n < traj.frame_count; ++n) {
      const Keypoint& kp = seq.frames[n].keypoints[k];
      const std::size_t i = traj.idx(k, n);
      traj.x[i] = kp.x;
      traj.y[i] = kp.y;
      traj.valid[i] = kp.conf >= conf_threshold ? 1 : 0;
    }
  }
  return traj;
}

namespace {

template <typename Out>
Out displacements_from(const TrajectoryMap& traj, int origin_of_frame(int n)) {
  Out out;
  out.keypoint_count = traj.keypoint_count;
  out.driven_frames = traj.driven_frames();
  const std::size_t total =
      static_cast<std::size_t>(out.keypoint_count) * out.driven_frames;
  out.dx.assign(total, 0.0);
  out.dy.assign(total, 0.0);
  out.valid.assign(total, 0);

  for (int k = 0; k < traj.keypoint_count; ++k) {
    for (int n = 1; n <= out.driven_frames; ++n) {
      const int m = origin_of_frame(n);
      if (!traj.is_valid(k, n) || !traj.is_valid(k, m)) continue;
      const std::size_t i = out.idx(k, n);
      out.dx[i] = traj.x[traj.idx(k, n)] - traj.x[traj.idx(k, m)];
      out.dy[i] = traj.y[traj.idx(k, n)] - traj.y[traj.idx(k, m)];
      out.valid[i] = 1;
    }
  }
  return out;
}

}  // namespace

TrackMatrix track_matrix(const TrajectoryMap& traj) {
  return displacements_from<TrackMatrix>(traj, [](int n) { return n - 1; });
}

RefDisplacement reference_displacements(const TrajectoryMap& traj) {
  return displacements_from<RefDisplacement>(traj, [](int) { return 0; });
}

}  // namespace poseguide
