#include "poseguide/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "poseguide/rng.hpp"

namespace poseguide {

namespace {

int map_coord(double v, int src_extent, int dst_extent) {
  const double scaled = v * static_cast<double>(dst_extent) / static_cast<double>(src_extent);
  return std::clamp(static_cast<int>(std::lround(scaled)), 0, dst_extent - 1);
}

}  // namespace

ImageF CorrespondenceStack::dense_frame(int n) const {
  ImageF out(dp, height, width, 0.0f);
  for (const CorrespondenceEntry& e : entries[n]) {
    const float* v = embeddings.vec(e.keypoint);
    for (int c = 0; c < dp; ++c) out.at(c, e.y, e.x) = v[c];
  }
  return out;
}

PointEmbeddings extract_point_embeddings(const FeatureMap& features, const TrajectoryMap& traj) {
  if (features.dp < 1) throw ShapeError("feature map must have at least one channel");
  if (features.src_height <= 0 || features.src_width <= 0)
    throw ShapeError("feature map is missing source image dims");

  PointEmbeddings emb;
  emb.dp = features.dp;
  emb.keypoint_count = traj.keypoint_count;
  emb.values.assign(static_cast<std::size_t>(traj.keypoint_count) * features.dp, 0.0f);
  emb.valid.assign(traj.keypoint_count, 0);

  for (int k = 0; k < traj.keypoint_count; ++k) {
    if (!traj.is_valid(k, 0)) continue;
    const int xf = map_coord(traj.x[traj.idx(k, 0)], features.src_width, features.wf);
    const int yf = map_coord(traj.y[traj.idx(k, 0)], features.src_height, features.hf);
    for (int c = 0; c < features.dp; ++c)
      emb.values[static_cast<std::size_t>(k) * features.dp + c] = features.at(c, yf, xf);
    emb.valid[k] = 1;
  }
  return emb;
}

namespace {

CorrespondenceStack place_embeddings(const PointEmbeddings& emb, const TrajectoryMap& traj,
                                     int height, int width, int full_height, int full_width) {
  if (height <= 0 || width <= 0)
    throw ShapeError("correspondence map dims must be positive");
  if (emb.keypoint_count != traj.keypoint_count)
    throw ShapeError("embedding/trajectory keypoint count mismatch");

  CorrespondenceStack stack;
  stack.frames = traj.driven_frames();
  stack.dp = emb.dp;
  stack.height = height;
  stack.width = width;
  stack.embeddings = emb;
  stack.entries.resize(stack.frames);

  for (int n = 1; n <= stack.frames; ++n) {
    std::unordered_set<int> occupied;
    for (int k = 0; k < traj.keypoint_count; ++k) {
      if (!emb.is_valid(k) || !traj.is_valid(k, n)) continue;
      const int x = map_coord(traj.x[traj.idx(k, n)], full_width, width);
      const int y = map_coord(traj.y[traj.idx(k, n)], full_height, height);
      if (!occupied.insert(y * width + x).second) continue;  // smallest k wins
      stack.entries[n - 1].push_back({x, y, k});
    }
  }
  return stack;
}

}  // namespace

CorrespondenceStack build_correspondence_map(const PointEmbeddings& emb,
                                             const TrajectoryMap& traj, int height, int width) {
  return place_embeddings(emb, traj, height, width, height, width);
}

CorrespondenceStack rescale_correspondence(const PointEmbeddings& emb, const TrajectoryMap& traj,
                                           int level_height, int level_width, int full_height,
                                           int full_width) {
  if (level_height > full_height || level_width > full_width)
    throw ShapeError("rescale_correspondence: level dims exceed full resolution");
  return place_embeddings(emb, traj, level_height, level_width, full_height, full_width);
}

PointLocation retrieve_point(const FeatureMap& src_features, PointLocation src,
                             const FeatureMap& tgt_features) {
  if (src_features.dp != tgt_features.dp)
    throw ShapeError("retrieve_point: feature dimension mismatch");
  if (src.x < 0 || src.x >= src_features.wf || src.y < 0 || src.y >= src_features.hf)
    throw IndexError("retrieve_point: source point outside feature grid");

  const int dp = src_features.dp;
  std::vector<double> q(dp);
  double qn = 0.0;
  for (int c = 0; c < dp; ++c) {
    q[c] = src_features.at(c, src.y, src.x);
    qn += q[c] * q[c];
  }
  qn = std::sqrt(qn);
  if (qn == 0.0) throw ParamError("degenerate feature: zero-norm source vector");

  PointLocation best{0, 0};
  double best_sim = -2.0;  // below any attainable cosine
  for (int y = 0; y < tgt_features.hf; ++y) {
    for (int x = 0; x < tgt_features.wf; ++x) {
      double dot = 0.0, tn = 0.0;
      for (int c = 0; c < dp; ++c) {
        const double t = tgt_features.at(c, y, x);
        dot += q[c] * t;
        tn += t * t;
      }
      if (tn == 0.0) continue;
      const double sim = dot / (qn * std::sqrt(tn));
      if (sim > best_sim) {
        best_sim = sim;
        best = {x, y};
      }
    }
  }
  return best;
}

SyntheticInjectiveProvider::SyntheticInjectiveProvider(int dp, int hf, int wf, std::uint64_t seed)
    : dp_(dp), hf_(hf), wf_(wf), seed_(seed) {
  if (dp < 2) throw ParamError("synthetic provider needs dp >= 2 for injective directions");
  if (hf < 1 || wf < 1) throw ParamError("synthetic provider grid must be non-empty");
}

FeatureMap SyntheticInjectiveProvider::make(int src_height, int src_width) const {
  FeatureMap fm;
  fm.dp = dp_;
  fm.hf = hf_;
  fm.wf = wf_;
  fm.src_height = src_height;
  fm.src_width = src_width;
  fm.data.assign(static_cast<std::size_t>(dp_) * hf_ * wf_, 0.0f);

  // Distinct directions in the (ch0, ch1) plane over a quarter circle
  // keep all pairwise cosines strictly below 1 regardless of filler.
  const int cells = hf_ * wf_;
  Rng rng(seed_);
  std::vector<float> filler(static_cast<std::size_t>(cells) * (dp_ - 2));
  for (float& f : filler) f = static_cast<float>(rng.uniform(-0.25, 0.25));

  for (int i = 0; i < cells; ++i) {
    const int y = i / wf_, x = i % wf_;
    const double theta = (i + 0.5) / cells * 1.5;  // within (0, pi/2)
    fm.at(0, y, x) = static_cast<float>(std::cos(theta));
    fm.at(1, y, x) = static_cast<float>(std::sin(theta));
    for (int c = 2; c < dp_; ++c)
      fm.at(c, y, x) = filler[static_cast<std::size_t>(i) * (dp_ - 2) + (c - 2)];
  }
  return fm;
}

FeatureMap SyntheticInjectiveProvider::extract(const ImageD& image) {
  return make(image.height(), image.width());
}

void write_feature_file(const FeatureMap& features, const std::filesystem::path& path) {
  nlohmann::json header;
  header["dp"] = features.dp;
  header["h"] = features.hf;
  header["w"] = features.wf;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file: " + path.string());
  out << header.dump() << "\n";
  out.write(reinterpret_cast<const char*>(features.data.data()),
            static_cast<std::streamsize>(features.data.size() * sizeof(float)));
  if (!out) throw IoError("short write to feature file: " + path.string());
}

FeatureMap read_feature_file(const std::filesystem::path& path, int src_height, int src_width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path.string());

  std::string header_line;
  if (!std::getline(in, header_line))
    throw FormatError("feature file missing JSON header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("feature file header: " + std::string(e.what()));
  }
  for (const char* field : {"dp", "h", "w"})
    if (!header.contains(field) || !header[field].is_number_integer())
      throw ParseError(std::string("feature file header: missing integer field \"") + field +
                       "\"");

  FeatureMap fm;
  fm.dp = header["dp"].get<int>();
  fm.hf = header["h"].get<int>();
  fm.wf = header["w"].get<int>();
  if (fm.dp < 1 || fm.hf < 1 || fm.wf < 1)
    throw ParseError("feature file header: non-positive dimensions");
  fm.src_height = src_height > 0 ? src_height : fm.hf;
  fm.src_width = src_width > 0 ? src_width : fm.wf;

  fm.data.resize(static_cast<std::size_t>(fm.dp) * fm.hf * fm.wf);
  in.read(reinterpret_cast<char*>(fm.data.data()),
          static_cast<std::streamsize>(fm.data.size() * sizeof(float)));
  if (!in) throw IoError("truncated feature payload: " + path.string());
  return fm;
}

}  // namespace poseguide
