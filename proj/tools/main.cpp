// poseguide: skeleton-pose motion-field and keypoint-correspondence
// guidance toolkit. Subcommands cover field generation, watershed flow
// sampling, correspondence building, flow rendering, the seeded toy
// training run and the invariant check suite.
//
// Exit codes: 0 success, 1 invariant-check failure, 2 input error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "poseguide/checks/checks.hpp"
#include "poseguide/correspondence.hpp"
#include "poseguide/flo_io.hpp"
#include "poseguide/flow_sampling.hpp"
#include "poseguide/flow_viz.hpp"
#include "poseguide/guidance.hpp"
#include "poseguide/motion_field.hpp"
#include "poseguide/png_io.hpp"
#include "poseguide/pose.hpp"
#include "poseguide/synthetic.hpp"
#include "poseguide/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace poseguide;

namespace {

// Flat run configuration; a JSON --config file provides defaults and
// explicit flags win over it (the pre-scan loads the file before the
// options are declared, so declared defaults come from the file).
struct RunConfig {
  std::string poses, flow, features, reference, external_cmp;
  std::string output_dir = "out";
  double sigma = 3.0;
  double beta = 0.01;
  double tol = 1e-5;
  double conf_threshold = 0.3;
  double edge_threshold = 1.0;
  int kf = 5;
  int levels = 4;
  int steps = 200;
  int sequences = 6;
  std::uint64_t seed = 7;
  std::string variant = "full";
  int frame = 0;
  std::string out_png;
  std::string suite = "all";
  bool skip_training = false;

  GuidanceConfig net;
};

void apply_json(RunConfig& cfg, const json& j) {
  auto get_str = [&](const char* key, std::string& dst) {
    if (j.contains(key)) dst = j[key].get<std::string>();
  };
  auto get_num = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j[key].get<std::decay_t<decltype(dst)>>();
  };
  get_str("poses", cfg.poses);
  get_str("flow", cfg.flow);
  get_str("features", cfg.features);
  get_str("reference", cfg.reference);
  get_str("external_cmp", cfg.external_cmp);
  get_str("output_dir", cfg.output_dir);
  get_str("variant", cfg.variant);
  get_num("sigma", cfg.sigma);
  get_num("beta", cfg.beta);
  get_num("tol", cfg.tol);
  get_num("conf_threshold", cfg.conf_threshold);
  get_num("edge_threshold", cfg.edge_threshold);
  get_num("kf", cfg.kf);
  get_num("levels", cfg.levels);
  get_num("steps", cfg.steps);
  get_num("sequences", cfg.sequences);
  get_num("seed", cfg.seed);
  if (j.contains("net")) {
    const json& n = j["net"];
    auto net_num = [&](const char* key, auto& dst) {
      if (n.contains(key)) dst = n[key].get<std::decay_t<decltype(dst)>>();
    };
    net_num("image_size", cfg.net.image_size);
    net_num("correspondence_dim", cfg.net.correspondence_dim);
    net_num("point_hidden", cfg.net.point_hidden);
    net_num("temb_dim", cfg.net.temb_dim);
    net_num("timesteps", cfg.net.timesteps);
    if (n.contains("level_channels"))
      cfg.net.level_channels = n["level_channels"].get<std::vector<int>>();
    if (n.contains("motion_channels"))
      cfg.net.motion_channels = n["motion_channels"].get<std::vector<int>>();
  }
}

std::string frame_name(const char* prefix, int n, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", prefix, n, ext);
  return buf;
}

void print_field_stats(const char* label, const MotionFieldStack& stack, int frame) {
  double max_mag = 0.0;
  std::size_t nonzero = 0;
  const std::size_t per_frame = static_cast<std::size_t>(stack.height()) * stack.width();
  for (int y = 0; y < stack.height(); ++y)
    for (int x = 0; x < stack.width(); ++x) {
      const double u = stack.at(frame, 0, y, x), v = stack.at(frame, 1, y, x);
      max_mag = std::max(max_mag, std::hypot(u, v));
      nonzero += u != 0.0 || v != 0.0;
    }
  std::printf("  %s: max|v| = %.3f px, nonzero = %.1f%%\n", label, max_mag,
              100.0 * static_cast<double>(nonzero) / static_cast<double>(per_frame));
}

// ---------------------------------------------------------------------------

int cmd_poses2fields(const RunConfig& cfg) {
  if (cfg.poses.empty()) throw ParamError("poses2fields needs --poses (or \"poses\" in --config)");
  const PoseSequence seq = load_pose_sequence(cfg.poses);
  const TrajectoryMap traj = build_trajectory(seq, cfg.conf_threshold);
  const RefDisplacement disp = reference_displacements(traj);
  const int h = seq.height, w = seq.width;

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);

  const MotionFieldStack f_s = rasterize_sparse_field(disp, traj, h, w, cfg.sigma);

  ImageD reference(3, h, w, 0.5);
  if (!cfg.reference.empty()) {
    const ImageU8 png = read_png_rgb(cfg.reference);
    if (png.height() != h || png.width() != w)
      throw ShapeError("reference image dims do not match the pose file");
    reference = to_unit_range(png);
  }

  PropagatorParams params;
  params.beta = cfg.beta;
  params.tol = cfg.tol;

  MotionFieldStack f_d(seq.driven_frames(), h, w);
  for (int n = 1; n <= seq.driven_frames(); ++n) {
    const SparseFlow constraints = constraints_from_reference(disp, traj, n, h, w);
    MotionFieldStack frame_field(1, h, w);
    bool imported = false;
    if (!cfg.external_cmp.empty()) {
      fs::create_directories(cfg.external_cmp);
      const fs::path cmp(cfg.external_cmp);
      if (!constraints.points.empty()) {
        char mask_name[64];
        std::snprintf(mask_name, sizeof(mask_name), "constraints_%04d_mask.png", n);
        export_constraints(constraints, cmp / frame_name("constraints", n, "flo"),
                           cmp / mask_name);
      }
      const fs::path dense = cmp / frame_name("dense", n, "flo");
      if (fs::exists(dense)) {
        frame_field = import_dense_field(dense);
        if (frame_field.height() != h || frame_field.width() != w)
          throw ShapeError("external dense field dims mismatch: " + dense.string());
        imported = true;
        std::printf("frame %d: imported external dense field %s\n", n,
                    dense.string().c_str());
      } else {
        std::printf("frame %d: exported constraints; %s not found, using baseline\n", n,
                    dense.string().c_str());
      }
    }
    if (!imported) {
      PropagationStats stats;
      frame_field = propagate_dense(reference, constraints, params, &stats);
      if (!stats.converged)
        std::fprintf(stderr,
                     "warning: frame %d propagation stopped at residual %.3g "
                     "(tol %.3g); keeping best iterate\n",
                     n, stats.residual, params.tol);
    }
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) f_d.at(n - 1, c, y, x) = frame_field.at(0, c, y, x);
  }

  for (int n = 1; n <= seq.driven_frames(); ++n) {
    save_flow(f_s, n - 1, out / frame_name("fs", n, "flo"));
    save_flow(f_d, n - 1, out / frame_name("fd", n, "flo"));
    render_flow_png(f_s, n - 1, out / frame_name("fs", n, "png"));
    render_flow_png(f_d, n - 1, out / frame_name("fd", n, "png"));
    std::printf("frame %d:\n", n);
    print_field_stats("F_s", f_s, n - 1);
    print_field_stats("F_d", f_d, n - 1);
  }
  std::printf("wrote %d F_s + %d F_d fields to %s\n", seq.driven_frames(),
              seq.driven_frames(), cfg.output_dir.c_str());
  return 0;
}

int cmd_sample_flow(const RunConfig& cfg) {
  if (cfg.flow.empty()) throw ParamError("sample-flow needs --flo (or \"flow\" in --config)");
  const MotionFieldStack flow = load_flow(cfg.flow);
  if (flow_edges(flow, 0, cfg.edge_threshold).count() == 0)
    std::fprintf(stderr,
                 "warning: no motion edges at threshold %.3f (constant flow?); "
                 "sampling from the border-distance fallback\n",
                 cfg.edge_threshold);
  const SparseFlow samples = sample_sparse_flow(flow, 0, cfg.edge_threshold, cfg.kf);

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);
  const fs::path flo_path = out / "constraints.flo";
  const fs::path mask_path = out / "constraints_mask.png";

  if (samples.points.empty()) {
    std::fprintf(stderr,
                 "warning: no constraints sampled (constant flow?); writing empty files\n");
    MotionFieldStack zeros(1, flow.height(), flow.width());
    save_flow(zeros, 0, flo_path);
    write_png_rgb(ImageU8(3, flow.height(), flow.width(), 0), mask_path);
  } else {
    export_constraints(samples, flo_path, mask_path);
  }
  std::printf("sampled %zu constraints (K_f = %d, edge threshold %.3f) -> %s\n",
              samples.points.size(), cfg.kf, cfg.edge_threshold, flo_path.string().c_str());
  return 0;
}

int cmd_build_correspondence(const RunConfig& cfg) {
  if (cfg.poses.empty() || cfg.features.empty())
    throw ParamError("build-correspondence needs --poses and --features");
  const PoseSequence seq = load_pose_sequence(cfg.poses);
  const TrajectoryMap traj = build_trajectory(seq, cfg.conf_threshold);
  const FeatureMap features = read_feature_file(cfg.features, seq.height, seq.width);
  const PointEmbeddings emb = extract_point_embeddings(features, traj);

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);

  for (int l = 0; l < cfg.levels; ++l) {
    const int lh = std::max(1, seq.height >> l), lw = std::max(1, seq.width >> l);
    const CorrespondenceStack stack =
        rescale_correspondence(emb, traj, lh, lw, seq.height, seq.width);
    std::size_t nonzero = 0;
    for (int n = 0; n < stack.frames; ++n) {
      const ImageF dense = stack.dense_frame(n);
      FeatureMap fm;
      fm.dp = stack.dp;
      fm.hf = lh;
      fm.wf = lw;
      fm.src_height = seq.height;
      fm.src_width = seq.width;
      fm.data.assign(dense.data(), dense.data() + dense.size());
      char name[64];
      std::snprintf(name, sizeof(name), "corr_l%d_f%04d.bin", l, n + 1);
      write_feature_file(fm, out / name);
      nonzero += stack.nonzero_pixels(n);
    }
    std::printf("level %d (%dx%d): %zu embedded points over %d frames\n", l, lw, lh, nonzero,
                stack.frames);
  }
  return 0;
}

int cmd_render_flow(const RunConfig& cfg) {
  if (cfg.flow.empty()) throw ParamError("render-flow needs --flo");
  const MotionFieldStack flow = load_flow(cfg.flow);
  const fs::path out = cfg.out_png.empty() ? fs::path(cfg.flow).replace_extension(".png")
                                           : fs::path(cfg.out_png);
  render_flow_png(flow, cfg.frame, out);
  std::printf("rendered %s -> %s\n", cfg.flow.c_str(), out.string().c_str());
  return 0;
}

int cmd_train_toy(const RunConfig& cfg) {
  ToyTrainConfig train;
  train.steps = cfg.steps;
  train.seed = cfg.seed;
  train.sequences = cfg.sequences;
  train.net = cfg.net;
  train.variant = parse_variant(cfg.variant);

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);

  std::unique_ptr<GuidancePipeline> pipeline;
  const ToyTrainResult result = train_toy(train, &pipeline);

  write_loss_csv(result.step_losses, out / "loss.csv");
  save_checkpoint(*pipeline, train.seed, out / "toy.ckpt");

  std::printf("trained %d steps (seed %llu, variant %s)\n", train.steps,
              static_cast<unsigned long long>(train.seed), cfg.variant.c_str());
  std::printf("eval loss: %.6f -> %.6f (factor %.3f)\n", result.eval_loss_before,
              result.eval_loss_after, result.eval_loss_after / result.eval_loss_before);
  std::printf("frozen base checksum %s\n",
              result.frozen_checksum_before == result.frozen_checksum_after ? "unchanged"
                                                                            : "CHANGED");
  std::printf("wrote %s and %s\n", (out / "loss.csv").string().c_str(),
              (out / "toy.ckpt").string().c_str());
  return result.frozen_checksum_before == result.frozen_checksum_after ? 0 : 1;
}

int cmd_check(const RunConfig& cfg) {
  checks::CheckOptions opt;
  opt.seed = cfg.seed;
  opt.include_training = !cfg.skip_training;

  std::vector<checks::CheckResult> results;
  if (cfg.suite == "all") {
    results = checks::run_all_checks(opt);
  } else if (cfg.suite == "transparency") {
    results = checks::check_transparency(opt);
  } else if (cfg.suite == "telescoping") {
    results = checks::check_telescoping(opt);
  } else if (cfg.suite == "propagation") {
    results = checks::check_propagation_oracle(opt);
  } else if (cfg.suite == "watershed") {
    results = checks::check_watershed_oracle(opt);
  } else if (cfg.suite == "correspondence") {
    results = checks::check_correspondence(opt);
  } else if (cfg.suite == "gradients") {
    results = checks::check_gradients(opt);
  } else if (cfg.suite == "training") {
    results = checks::check_toy_training(opt);
  } else if (cfg.suite == "formats") {
    results = checks::check_format_fidelity(opt);
  } else {
    throw ConfigError("unknown suite: " + cfg.suite +
                      " (all, transparency, telescoping, propagation, watershed, "
                      "correspondence, gradients, training, formats)");
  }

  bool all_passed = true;
  for (const checks::CheckResult& r : results) {
    std::printf("[%s] %s/%s%s%s\n", r.passed ? "PASS" : "FAIL", r.module.c_str(),
                r.name.c_str(), r.witness.empty() ? "" : ": ", r.witness.c_str());
    all_passed = all_passed && r.passed;
  }
  return all_passed ? 0 : 1;
}

std::optional<fs::path> prescan_config_path(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string_view(argv[i]) == "--config") return fs::path(argv[i + 1]);
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg(argv[i]);
    if (arg.rfind("--config=", 0) == 0) return fs::path(arg.substr(9));
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;

  try {
    if (const auto config_path = prescan_config_path(argc, argv)) {
      std::ifstream in(*config_path);
      if (!in) throw IoError("cannot open config file: " + config_path->string());
      json j;
      in >> j;
      apply_json(cfg, j);
    }
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: config file: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  CLI::App app{"pose-driven motion-field and keypoint-correspondence guidance toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config appear after the subcommand name
  std::string config_dummy;
  app.add_option("--config", config_dummy, "JSON run configuration (flags win over it)");

  auto* p2f = app.add_subcommand("poses2fields",
                                 "pose JSON -> sparse (F_s) and dense (F_d) motion fields");
  p2f->add_option("--poses", cfg.poses, "pose JSON file");
  p2f->add_option("--reference", cfg.reference, "reference PNG for edge-aware propagation");
  p2f->add_option("--out", cfg.output_dir, "output directory");
  p2f->add_option("--sigma", cfg.sigma, "Gaussian splat sigma in px");
  p2f->add_option("--beta", cfg.beta, "propagation edge sensitivity");
  p2f->add_option("--tol", cfg.tol, "propagation residual tolerance");
  p2f->add_option("--conf-threshold", cfg.conf_threshold, "keypoint confidence gate");
  p2f->add_option("--external-cmp", cfg.external_cmp,
                  "constraint-exchange dir for an external CMP model");

  auto* sf = app.add_subcommand("sample-flow", "watershed-sample sparse flow from a .flo");
  sf->add_option("--flo", cfg.flow, "dense forward flow (.flo)");
  sf->add_option("--kf", cfg.kf, "NMS kernel size (odd, >= 3)");
  sf->add_option("--edge-thresh", cfg.edge_threshold, "Sobel magnitude threshold");
  sf->add_option("--out", cfg.output_dir, "constraints output directory");

  auto* bc = app.add_subcommand("build-correspondence",
                                "place reference point embeddings along trajectories");
  bc->add_option("--poses", cfg.poses, "pose JSON file");
  bc->add_option("--features", cfg.features, "reference feature file");
  bc->add_option("--levels", cfg.levels, "number of pyramid levels");
  bc->add_option("--conf-threshold", cfg.conf_threshold, "keypoint confidence gate");
  bc->add_option("--out", cfg.output_dir, "output directory");

  auto* rf = app.add_subcommand("render-flow", "color-wheel PNG of a .flo field");
  rf->add_option("--flo", cfg.flow, "flow file");
  rf->add_option("--frame", cfg.frame, "frame index");
  rf->add_option("--out", cfg.out_png, "output PNG (default: alongside input)");

  auto* tt = app.add_subcommand("train-toy", "seeded toy training run");
  tt->add_option("--steps", cfg.steps, "optimizer steps");
  tt->add_option("--seed", cfg.seed, "master seed");
  tt->add_option("--sequences", cfg.sequences, "synthetic sequences in the dataset");
  tt->add_option("--variant", cfg.variant, "wiring variant: full, exp1, exp2");
  tt->add_option("--out", cfg.output_dir, "output directory");

  auto* ck = app.add_subcommand("check", "run the invariant suite");
  ck->add_option("--suite", cfg.suite, "all or a single group");
  ck->add_option("--seed", cfg.seed, "suite seed");
  ck->add_flag("--skip-training", cfg.skip_training, "skip the two toy training runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (p2f->parsed()) return cmd_poses2fields(cfg);
    if (sf->parsed()) return cmd_sample_flow(cfg);
    if (bc->parsed()) return cmd_build_correspondence(cfg);
    if (rf->parsed()) return cmd_render_flow(cfg);
    if (tt->parsed()) return cmd_train_toy(cfg);
    if (ck->parsed()) return cmd_check(cfg);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
