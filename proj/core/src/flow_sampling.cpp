#include "poseguide/flow_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace poseguide {

namespace {

void check_frame(const MotionFieldStack& flow, int frame) {
  if (frame < 0 || frame >= flow.frames())
    throw IndexError("flow frame " + std::to_string(frame) + " out of range [0, " +
                     std::to_string(flow.frames()) + ")");
}

// 1D squared distance transform (Felzenszwalb & Huttenlocher lower
// envelope of parabolas). Exact for integer-valued inputs.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n,
            std::vector<int>& v, std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + static_cast<double>(q) * q) -
                (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
               (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + static_cast<double>(q) * q) -
           (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
          (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

int EdgeMap::count() const {
  int c = 0;
  for (std::uint8_t e : edge) c += e != 0;
  return c;
}

EdgeMap flow_edges(const MotionFieldStack& flow, int frame, double edge_threshold) {
  check_frame(flow, frame);
  if (edge_threshold < 0.0) throw ParamError("edge_threshold must be >= 0");
  const int h = flow.height(), w = flow.width();

  EdgeMap edges;
  edges.height = h;
  edges.width = w;
  edges.edge.assign(static_cast<std::size_t>(h) * w, 0);

  auto sample = [&](int c, int y, int x) {
    return static_cast<double>(
        flow.at(frame, c, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)));
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double mag_sq = 0.0;
      for (int c = 0; c < 2; ++c) {
        const double gx = (sample(c, y - 1, x + 1) + 2.0 * sample(c, y, x + 1) +
                           sample(c, y + 1, x + 1)) -
                          (sample(c, y - 1, x - 1) + 2.0 * sample(c, y, x - 1) +
                           sample(c, y + 1, x - 1));
        const double gy = (sample(c, y + 1, x - 1) + 2.0 * sample(c, y + 1, x) +
                           sample(c, y + 1, x + 1)) -
                          (sample(c, y - 1, x - 1) + 2.0 * sample(c, y - 1, x) +
                           sample(c, y - 1, x + 1));
        mag_sq += gx * gx + gy * gy;
      }
      if (std::sqrt(mag_sq) >= edge_threshold)
        edges.edge[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return edges;
}

DistanceMap watershed_distance_map(const EdgeMap& edges) {
  const int h = edges.height, w = edges.width;
  if (h <= 0 || w <= 0) throw ShapeError("watershed_distance_map: empty edge map");

  DistanceMap out;
  out.height = h;
  out.width = w;
  out.dist.assign(static_cast<std::size_t>(h) * w, 0.0);

  bool any_edge = false;
  for (std::uint8_t e : edges.edge)
    if (e) {
      any_edge = true;
      break;
    }

  if (!any_edge) {
    // Border-distance fallback for static clips (no motion edges).
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.dist[static_cast<std::size_t>(y) * w + x] =
            static_cast<double>(std::min({x, y, w - 1 - x, h - 1 - y}));
    return out;
  }

  // Two-pass exact squared EDT, then sqrt.
  const double inf = 1e30;  // larger than any attainable squared distance
  std::vector<double> g(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      g[static_cast<std::size_t>(y) * w + x] = edges.at(y, x) ? 0.0 : inf;

  const int n_max = std::max(h, w);
  std::vector<double> f(n_max), d(n_max);
  std::vector<int> v(n_max);
  std::vector<double> z(static_cast<std::size_t>(n_max) + 1);

  for (int x = 0; x < w; ++x) {  // columns
    for (int y = 0; y < h; ++y) f[y] = g[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, h, v, z);
    for (int y = 0; y < h; ++y) g[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {  // rows
    for (int x = 0; x < w; ++x) f[x] = g[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, w, v, z);
    for (int x = 0; x < w; ++x)
      out.dist[static_cast<std::size_t>(y) * w + x] = std::sqrt(d[x]);
  }
  return out;
}

SparseFlow sample_keypoints_nms(const DistanceMap& dist, int kernel_size,
                                const MotionFieldStack& flow, int frame) {
  check_frame(flow, frame);
  if (kernel_size < 3 || kernel_size % 2 == 0)
    throw ParamError("NMS kernel size must be odd and >= 3");
  const int h = dist.height, w = dist.width;
  if (flow.height() != h || flow.width() != w)
    throw ShapeError("sample_keypoints_nms: flow/distance dims mismatch");
  const int r = kernel_size / 2;

  SparseFlow sf;
  sf.width = w;
  sf.height = h;

  // Winner in a window is the max under (distance, earliest row-major)
  // lexicographic order; a pixel is selected iff it beats every other
  // pixel in its own window.
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double dv = dist.at(y, x);
      if (!(dv > 0.0)) continue;
      bool wins = true;
      const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
      const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
      for (int yy = y0; yy <= y1 && wins; ++yy) {
        for (int xx = x0; xx <= x1; ++xx) {
          if (yy == y && xx == x) continue;
          const double dq = dist.at(yy, xx);
          const bool earlier = yy < y || (yy == y && xx < x);
          if (dq > dv || (dq == dv && earlier)) {
            wins = false;
            break;
          }
        }
      }
      if (wins)
        sf.points.push_back({x, y, flow.at(frame, 0, y, x), flow.at(frame, 1, y, x)});
    }
  }
  return sf;
}

SparseFlow sample_sparse_flow(const MotionFieldStack& flow, int frame, double edge_threshold,
                              int kernel_size) {
  const EdgeMap edges = flow_edges(flow, frame, edge_threshold);
  const DistanceMap dist = watershed_distance_map(edges);
  return sample_keypoints_nms(dist, kernel_size, flow, frame);
}

}  // namespace poseguide
