#include "poseguide/flow_viz.hpp"

#include <algorithm>
#include <cmath>

#include "poseguide/png_io.hpp"

namespace poseguide {

namespace {

constexpr double kPi = 3.14159265358979323846;

void hsv_to_rgb(double h_deg, double s, double v, std::uint8_t* rgb) {
  const double c = v * s;
  const double hp = h_deg / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1)      { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else             { r = c; b = x; }
  const double m = v - c;
  rgb[0] = static_cast<std::uint8_t>(std::lround(std::clamp(r + m, 0.0, 1.0) * 255.0));
  rgb[1] = static_cast<std::uint8_t>(std::lround(std::clamp(g + m, 0.0, 1.0) * 255.0));
  rgb[2] = static_cast<std::uint8_t>(std::lround(std::clamp(b + m, 0.0, 1.0) * 255.0));
}

}  // namespace

ImageU8 flow_frame_to_rgb(const MotionFieldStack& field, int frame) {
  if (frame < 0 || frame >= field.frames())
    throw IndexError("flow_frame_to_rgb: frame " + std::to_string(frame) +
                     " out of range [0, " + std::to_string(field.frames()) + ")");
  const int h = field.height(), w = field.width();

  double max_mag = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = field.at(frame, 0, y, x);
      const double v = field.at(frame, 1, y, x);
      max_mag = std::max(max_mag, std::hypot(u, v));
    }

  ImageU8 rgb(3, h, w, 255);
  if (max_mag == 0.0) return rgb;  // all-white

  std::uint8_t px[3];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = field.at(frame, 0, y, x);
      const double v = field.at(frame, 1, y, x);
      double hue = std::atan2(v, u) * 180.0 / kPi;
      if (hue < 0.0) hue += 360.0;
      if (hue >= 360.0) hue = 0.0;
      const double sat = std::hypot(u, v) / max_mag;
      hsv_to_rgb(hue, std::clamp(sat, 0.0, 1.0), 1.0, px);
      rgb.at(0, y, x) = px[0];
      rgb.at(1, y, x) = px[1];
      rgb.at(2, y, x) = px[2];
    }
  return rgb;
}

void render_flow_png(const MotionFieldStack& field, int frame,
                     const std::filesystem::path& path) {
  write_png_rgb(flow_frame_to_rgb(field, frame), path);
}

double rgb_to_hue_degrees(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double rf = r / 255.0, gf = g / 255.0, bf = b / 255.0;
  const double mx = std::max({rf, gf, bf});
  const double mn = std::min({rf, gf, bf});
  const double d = mx - mn;
  if (d == 0.0) return 0.0;
  double h;
  if (mx == rf)      h = std::fmod((gf - bf) / d, 6.0);
  else if (mx == gf) h = (bf - rf) / d + 2.0;
  else               h = (rf - gf) / d + 4.0;
  h *= 60.0;
  if (h < 0.0) h += 360.0;
  return h;
}

}  // namespace poseguide
