#pragma once

#include <filesystem>

#include "poseguide/image.hpp"

namespace poseguide {

// Color-wheel rendering of one flow frame: hue encodes atan2(v, u),
// saturation scales with |vector| / max |vector| over the frame, value
// is 1. A frame with zero maximum magnitude renders all-white.
ImageU8 flow_frame_to_rgb(const MotionFieldStack& field, int frame);

// Renders and writes an 8-bit RGB PNG.
void render_flow_png(const MotionFieldStack& field, int frame,
                     const std::filesystem::path& path);

// Hue in degrees [0, 360) recovered from an RGB pixel produced by the
// renderer (value channel is always 1 there). Used by tests to compare
// hue independent of saturation quantization.
double rgb_to_hue_degrees(std::uint8_t r, std::uint8_t g, std::uint8_t b);

}  // namespace poseguide
