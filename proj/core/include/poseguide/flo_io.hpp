#pragma once

#include <filesystem>

#include "poseguide/image.hpp"

namespace poseguide {

// Middlebury .flo container: little-endian float32 magic 202021.25,
// int32 width, int32 height, then H rows × W columns of interleaved
// (u, v) float32 pairs. Round-trips are bit-exact.

inline constexpr float kFloMagic = 202021.25f;

// Loads one dense flow field as a single-frame stack.
MotionFieldStack load_flow(const std::filesystem::path& path);

// Writes frame `frame` of the stack.
void save_flow(const MotionFieldStack& field, int frame, const std::filesystem::path& path);

inline void save_flow(const MotionFieldStack& field, const std::filesystem::path& path) {
  save_flow(field, 0, path);
}

// Alias for the external-CMP exchange path: any .flo can come back in.
inline MotionFieldStack import_dense_field(const std::filesystem::path& path) {
  return load_flow(path);
}

}  // namespace poseguide
