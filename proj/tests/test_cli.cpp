#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "poseguide/correspondence.hpp"
#include "poseguide/flo_io.hpp"
#include "poseguide/png_io.hpp"

using namespace poseguide;
namespace fs = std::filesystem;

namespace {

const fs::path kWorkDir = fs::temp_directory_path() / "poseguide_test_cli";

int run_cli(const std::string& args, const fs::path& stdout_file = {}) {
  std::string cmd = std::string(POSEGUIDE_CLI_PATH) + " " + args;
  if (!stdout_file.empty())
    cmd += " > " + stdout_file.string() + " 2>&1";
  else
    cmd += " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = kWorkDir / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_demo_poses(const fs::path& p, bool moving = true) {
  const char* moving_json = R"({"width":32,"height":32,"keypoint_count":2,
    "frames":[{"index":0,"keypoints":[[10,10,1.0],[20,18,0.9]]},
              {"index":1,"keypoints":[[13,12,1.0],[23,20,0.9]]}]})";
  const char* static_json = R"({"width":32,"height":32,"keypoint_count":2,
    "frames":[{"index":0,"keypoints":[[10,10,1.0],[20,18,0.9]]},
              {"index":1,"keypoints":[[10,10,1.0],[20,18,0.9]]}]})";
  write_text(p, moving ? moving_json : static_json);
}

}  // namespace

TEST_CASE("poses2fields writes one field pair plus PNGs per driven frame") {
  const fs::path dir = fresh_dir("p2f");
  write_demo_poses(dir / "poses.json");
  const int rc = run_cli("poses2fields --poses " + (dir / "poses.json").string() + " --out " +
                         (dir / "out").string());
  CHECK(rc == 0);
  CHECK(fs::exists(dir / "out/fs_0001.flo"));
  CHECK(fs::exists(dir / "out/fd_0001.flo"));
  CHECK(fs::exists(dir / "out/fs_0001.png"));
  CHECK(fs::exists(dir / "out/fd_0001.png"));
  // 2-frame file -> exactly one driven frame worth of outputs.
  CHECK(!fs::exists(dir / "out/fs_0002.flo"));

  const MotionFieldStack fd = load_flow(dir / "out/fd_0001.flo");
  CHECK(fd.height() == 32);
  CHECK(fd.width() == 32);
}

TEST_CASE("static poses produce all-zero fields and all-white renderings") {
  const fs::path dir = fresh_dir("p2f_static");
  write_demo_poses(dir / "poses.json", /*moving=*/false);
  const int rc = run_cli("poses2fields --poses " + (dir / "poses.json").string() + " --out " +
                         (dir / "out").string());
  CHECK(rc == 0);
  const MotionFieldStack fs_field = load_flow(dir / "out/fs_0001.flo");
  for (std::size_t i = 0; i < fs_field.size(); ++i) CHECK(fs_field.data()[i] == 0.0f);
  const ImageU8 png = read_png_rgb(dir / "out/fs_0001.png");
  for (std::size_t i = 0; i < png.size(); ++i) CHECK(png.data()[i] == 255);
}

TEST_CASE("a missing pose file exits with code 2 and names the path") {
  const fs::path dir = fresh_dir("p2f_missing");
  const fs::path log = dir / "log.txt";
  const int rc = run_cli("poses2fields --poses " + (dir / "nope.json").string() + " --out " +
                             (dir / "out").string(),
                         log);
  CHECK(rc == 2);
  CHECK(read_text(log).find("nope.json") != std::string::npos);
}

TEST_CASE("sample-flow on constant flow warns; fallback samples carry the constant vector") {
  const fs::path dir = fresh_dir("sample_const");
  MotionFieldStack flow(1, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) flow.at(0, 0, y, x) = 2.0f;
  save_flow(flow, 0, dir / "flow.flo");
  const fs::path log = dir / "log.txt";
  const int rc = run_cli("sample-flow --flo " + (dir / "flow.flo").string() + " --kf 5 --out " +
                             (dir / "out").string(),
                         log);
  CHECK(rc == 0);
  CHECK(read_text(log).find("warning") != std::string::npos);
  // Any point selected from the border-distance fallback carries the
  // constant vector (2, 0) exactly; everything else stays zero.
  const MotionFieldStack constraints = load_flow(dir / "out/constraints.flo");
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const float u = constraints.at(0, 0, y, x);
      CHECK((u == 0.0f || u == 2.0f));
      CHECK(constraints.at(0, 1, y, x) == 0.0f);
    }
}

TEST_CASE("sample-flow on structured flow emits constraints and a matching mask") {
  const fs::path dir = fresh_dir("sample_rect");
  MotionFieldStack flow(1, 32, 32);
  for (int y = 10; y < 22; ++y)
    for (int x = 8; x < 24; ++x) flow.at(0, 0, y, x) = 5.0f;
  save_flow(flow, 0, dir / "flow.flo");
  const int rc = run_cli("sample-flow --flo " + (dir / "flow.flo").string() +
                         " --kf 5 --edge-thresh 1.0 --out " + (dir / "out").string());
  CHECK(rc == 0);
  const ImageU8 mask = read_png_rgb(dir / "out/constraints_mask.png");
  int white = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) white += mask.at(0, y, x) == 255;
  CHECK(white > 0);
}

TEST_CASE("build-correspondence writes one level file per frame and level") {
  const fs::path dir = fresh_dir("corr");
  write_demo_poses(dir / "poses.json");
  SyntheticInjectiveProvider provider(8, 16, 16, 3);
  write_feature_file(provider.make(32, 32), dir / "features.bin");
  const int rc = run_cli("build-correspondence --poses " + (dir / "poses.json").string() +
                         " --features " + (dir / "features.bin").string() + " --levels 3 --out " +
                         (dir / "out").string());
  CHECK(rc == 0);
  for (int l = 0; l < 3; ++l) {
    char name[64];
    std::snprintf(name, sizeof(name), "corr_l%d_f0001.bin", l);
    CHECK(fs::exists(dir / "out" / name));
  }
  const FeatureMap level0 = read_feature_file(dir / "out/corr_l0_f0001.bin");
  CHECK(level0.dp == 8);
  CHECK(level0.hf == 32);
  const FeatureMap level2 = read_feature_file(dir / "out/corr_l2_f0001.bin");
  CHECK(level2.hf == 8);
}

TEST_CASE("render-flow produces a PNG for a chosen frame") {
  const fs::path dir = fresh_dir("render");
  MotionFieldStack flow(1, 8, 8);
  flow.at(0, 0, 3, 3) = 1.0f;
  save_flow(flow, 0, dir / "f.flo");
  const int rc =
      run_cli("render-flow --flo " + (dir / "f.flo").string() + " --out " +
              (dir / "f.png").string());
  CHECK(rc == 0);
  const ImageU8 png = read_png_rgb(dir / "f.png");
  CHECK(png.width() == 8);

  CHECK(run_cli("render-flow --flo " + (dir / "f.flo").string() + " --frame 2") == 2);
}

TEST_CASE("seeded train-toy runs are byte-identical, flags win over config") {
  const fs::path dir = fresh_dir("train");
  // Config asks for 3 steps; the flag overrides to 8.
  write_text(dir / "cfg.json", R"({"steps":3,"seed":11,"sequences":2,
    "net":{"image_size":32,"level_channels":[8,12],"motion_channels":[4,6,8],
           "correspondence_dim":6,"point_hidden":8}})");

  const std::string base_cmd = "train-toy --config " + (dir / "cfg.json").string() +
                               " --steps 8 --out ";
  CHECK(run_cli(base_cmd + (dir / "run1").string()) == 0);
  CHECK(run_cli(base_cmd + (dir / "run2").string()) == 0);

  const std::string csv1 = read_text(dir / "run1/loss.csv");
  CHECK(read_bytes(dir / "run1/loss.csv") == read_bytes(dir / "run2/loss.csv"));
  CHECK(read_bytes(dir / "run1/toy.ckpt") == read_bytes(dir / "run2/toy.ckpt"));

  // 8 steps of CSV plus header.
  int lines = 0;
  for (char c : csv1) lines += c == '\n';
  CHECK(lines == 9);
  CHECK(csv1.rfind("step,loss", 0) == 0);
}

TEST_CASE("check subcommand runs a single suite and reports pass lines") {
  const fs::path dir = fresh_dir("check");
  const fs::path log = dir / "log.txt";
  const int rc = run_cli("check --suite telescoping", log);
  CHECK(rc == 0);
  const std::string out = read_text(log);
  CHECK(out.find("[PASS] trajectory/telescoping") != std::string::npos);

  CHECK(run_cli("check --suite nonsense", log) == 2);
}
