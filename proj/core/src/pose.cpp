#include "poseguide/pose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace poseguide {

namespace {

using nlohmann::json;

int require_int(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_number_integer())
    throw ParseError(std::string("pose file: missing or non-integer field \"") + field + "\"");
  return j[field].get<int>();
}

}  // namespace

void PoseSequence::validate() const {
  if (width <= 0 || height <= 0)
    throw ParseError("pose sequence: width and height must be positive");
  if (keypoint_count <= 0)
    throw ParseError("pose sequence: keypoint_count must be positive");
  if (frames.empty()) throw ParseError("pose sequence: no frames");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const PoseFrame& f = frames[i];
    if (f.index != static_cast<int>(i))
      throw ParseError("pose sequence: non-contiguous frames (expected index " +
                       std::to_string(i) + ", got " + std::to_string(f.index) + ")");
    if (static_cast<int>(f.keypoints.size()) != keypoint_count)
      throw ParseError("pose sequence: frame " + std::to_string(f.index) + " has " +
                       std::to_string(f.keypoints.size()) + " keypoints, expected " +
                       std::to_string(keypoint_count));
    for (std::size_t k = 0; k < f.keypoints.size(); ++k) {
      const Keypoint& kp = f.keypoints[k];
      if (!std::isfinite(kp.x) || !std::isfinite(kp.y))
        throw ParseError("pose sequence: non-finite coordinate at frame " +
                         std::to_string(f.index) + ", keypoint " + std::to_string(k));
      if (!(kp.conf >= 0.0 && kp.conf <= 1.0))
        throw ParseError("pose sequence: confidence out of range at frame " +
                         std::to_string(f.index) + ", keypoint " + std::to_string(k));
    }
  }
}

PoseSequence load_pose_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file: " + path.string());

  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("pose file " + path.string() + ": " + e.what());
  }

  PoseSequence seq;
  seq.width = require_int(j, "width");
  seq.height = require_int(j, "height");
  seq.keypoint_count = require_int(j, "keypoint_count");

  if (!j.contains("frames") || !j["frames"].is_array())
    throw ParseError("pose file: missing or non-array field \"frames\"");

  for (const json& jf : j["frames"]) {
    PoseFrame frame;
    frame.index = require_int(jf, "index");
    if (!jf.contains("keypoints") || !jf["keypoints"].is_array())
      throw ParseError("pose file: frame " + std::to_string(frame.index) +
                       ": missing or non-array field \"keypoints\"");
    for (const json& jk : jf["keypoints"]) {
      if (!jk.is_array() || jk.size() != 3 || !jk[0].is_number() || !jk[1].is_number() ||
          !jk[2].is_number())
        throw ParseError("pose file: frame " + std::to_string(frame.index) +
                         ": keypoint entries must be [x, y, conf] numbers");
      frame.keypoints.push_back({jk[0].get<double>(), jk[1].get<double>(), jk[2].get<double>()});
    }
    seq.frames.push_back(std::move(frame));
  }

  std::sort(seq.frames.begin(), seq.frames.end(),
            [](const PoseFrame& a, const PoseFrame& b) { return a.index < b.index; });
  seq.validate();
  return seq;
}

void save_pose_sequence(const PoseSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  json j;
  j["width"] = seq.width;
  j["height"] = seq.height;
  j["keypoint_count"] = seq.keypoint_count;
  j["frames"] = json::array();
  for (const PoseFrame& f : seq.frames) {
    json jf;
    jf["index"] = f.index;
    jf["keypoints"] = json::array();
    for (const Keypoint& kp : f.keypoints)
      jf["keypoints"].push_back(json::array({kp.x, kp.y, kp.conf}));
    j["frames"].push_back(std::move(jf));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pose file: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to pose file: " + path.string());
}

}  // namespace poseguide
