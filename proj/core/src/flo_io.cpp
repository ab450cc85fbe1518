#include "poseguide/flo_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace poseguide {

namespace {

static_assert(std::endian::native == std::endian::little,
              "flo I/O assumes a little-endian host");

template <typename T>
T read_scalar(std::istream& in, const std::filesystem::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated .flo file: " + path.string());
  return v;
}

}  // namespace

MotionFieldStack load_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open .flo file: " + path.string());

  const float magic = read_scalar<float>(in, path);
  if (magic != kFloMagic)
    throw FormatError(".flo magic mismatch in " + path.string() + " (got " +
                      std::to_string(magic) + ")");
  const std::int32_t width = read_scalar<std::int32_t>(in, path);
  const std::int32_t height = read_scalar<std::int32_t>(in, path);
  if (width <= 0 || height <= 0)
    throw FormatError(".flo has non-positive dimensions: " + path.string());

  std::vector<float> row(static_cast<std::size_t>(width) * 2);
  MotionFieldStack field(1, height, width);
  for (int y = 0; y < height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw IoError("truncated .flo payload: " + path.string());
    for (int x = 0; x < width; ++x) {
      field.at(0, 0, y, x) = row[2 * x];
      field.at(0, 1, y, x) = row[2 * x + 1];
    }
  }
  return field;
}

void save_flow(const MotionFieldStack& field, int frame, const std::filesystem::path& path) {
  if (frame < 0 || frame >= field.frames())
    throw IndexError("save_flow: frame " + std::to_string(frame) + " out of range [0, " +
                     std::to_string(field.frames()) + ")");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write .flo file: " + path.string());

  const float magic = kFloMagic;
  const std::int32_t width = field.width();
  const std::int32_t height = field.height();
  out.write(reinterpret_cast<const char*>(&magic), sizeof(magic));
  out.write(reinterpret_cast<const char*>(&width), sizeof(width));
  out.write(reinterpret_cast<const char*>(&height), sizeof(height));

  std::vector<float> row(static_cast<std::size_t>(width) * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      row[2 * x] = field.at(frame, 0, y, x);
      row[2 * x + 1] = field.at(frame, 1, y, x);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write to .flo file: " + path.string());
}

}  // namespace poseguide
