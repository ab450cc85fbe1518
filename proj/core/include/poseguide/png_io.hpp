#pragma once

#include <filesystem>

#include "poseguide/image.hpp"

namespace poseguide {

// 8-bit RGB PNG, no alpha. Grayscale and RGBA inputs are expanded to RGB
// on read so callers always see 3 channels.
void write_png_rgb(const ImageU8& rgb, const std::filesystem::path& path);
ImageU8 read_png_rgb(const std::filesystem::path& path);

// Converts to [0,1] doubles, the range the edge-aware propagator expects.
ImageD to_unit_range(const ImageU8& rgb);

}  // namespace poseguide
