#include "poseguide/checks/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace poseguide::oracles {

MotionFieldStack propagate_fixed_point(const ImageD& reference, const SparseFlow& constraints,
                                       double beta, double tol, long max_sweeps) {
  const int h = constraints.height, w = constraints.width;
  const std::size_t total = static_cast<std::size_t>(h) * w;

  std::vector<std::uint8_t> pinned(total, 0);
  std::vector<double> u(total, 0.0), v(total, 0.0);
  double mean_u = 0.0, mean_v = 0.0;
  for (const SparseConstraint& c : constraints.points) {
    const std::size_t p = static_cast<std::size_t>(c.y) * w + c.x;
    pinned[p] = 1;
    u[p] = c.u;
    v[p] = c.v;
    mean_u += c.u;
    mean_v += c.v;
  }
  mean_u /= static_cast<double>(constraints.points.size());
  mean_v /= static_cast<double>(constraints.points.size());
  for (std::size_t p = 0; p < total; ++p)
    if (!pinned[p]) {
      u[p] = mean_u;
      v[p] = mean_v;
    }

  auto weight = [&](int y0, int x0, int y1, int x1) {
    double d2 = 0.0;
    for (int c = 0; c < reference.channels(); ++c) {
      const double d = reference.at(c, y0, x0) - reference.at(c, y1, x1);
      d2 += d * d;
    }
    return std::max(std::exp(-d2 / beta), 1e-12);
  };

  std::vector<double> next(total);
  for (long sweep = 0; sweep < max_sweeps; ++sweep) {
    double worst = 0.0;
    for (std::vector<double>* chan : {&u, &v}) {
      std::vector<double>& x = *chan;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const std::size_t p = static_cast<std::size_t>(y) * w + xx;
          if (pinned[p]) {
            next[p] = x[p];
            continue;
          }
          double num = 0.0, den = 0.0;
          if (xx > 0)     { const double wq = weight(y, xx, y, xx - 1); num += wq * x[p - 1]; den += wq; }
          if (xx + 1 < w) { const double wq = weight(y, xx, y, xx + 1); num += wq * x[p + 1]; den += wq; }
          if (y > 0)      { const double wq = weight(y, xx, y - 1, xx); num += wq * x[p - w]; den += wq; }
          if (y + 1 < h)  { const double wq = weight(y, xx, y + 1, xx); num += wq * x[p + w]; den += wq; }
          next[p] = num / den;
          worst = std::max(worst, std::abs(next[p] - x[p]));
        }
      x = next;
    }
    if (worst < tol) break;
  }

  MotionFieldStack out(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const std::size_t p = static_cast<std::size_t>(y) * w + xx;
      out.at(0, 0, y, xx) = static_cast<float>(u[p]);
      out.at(0, 1, y, xx) = static_cast<float>(v[p]);
    }
  return out;
}

DistanceMap distance_map_all_pairs(const EdgeMap& edges) {
  const int h = edges.height, w = edges.width;
  std::vector<std::pair<int, int>> edge_px;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (edges.at(y, x)) edge_px.emplace_back(y, x);

  DistanceMap out;
  out.height = h;
  out.width = w;
  out.dist.assign(static_cast<std::size_t>(h) * w, 0.0);

  if (edge_px.empty()) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.dist[static_cast<std::size_t>(y) * w + x] =
            static_cast<double>(std::min({x, y, w - 1 - x, h - 1 - y}));
    return out;
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      long best = std::numeric_limits<long>::max();
      for (const auto& [ey, ex] : edge_px) {
        const long dy = y - ey, dx = x - ex;
        best = std::min(best, dy * dy + dx * dx);
      }
      out.dist[static_cast<std::size_t>(y) * w + x] = std::sqrt(static_cast<double>(best));
    }
  return out;
}

}  // namespace poseguide::oracles
