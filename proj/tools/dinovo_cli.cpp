// dinovo: command-line front end for detection, description, matching,
// odometry, evaluation and synthetic data generation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dinovo/dinovo.hpp"

namespace fs = std::filesystem;
using namespace dinovo;

namespace {

/// Pipeline settings shared by every command that detects, describes or matches.
struct PipelineFlags {
  std::string config;
  std::vector<std::string> settings;
  PipelineConfig values;
  std::string backend = "mutual_nn", provider = "classical";
  std::map<std::string, CLI::Option*> options;

  void add(CLI::App* app, bool odometry) {
    app->add_option("--config", config, "Pipeline config file (key = value per line)")->check(CLI::ExistingFile);
    app->add_option("--set", settings, "Extra config setting key=value; repeatable, applied after --config");
    auto& d = values.detector;
    options["detector.nms_radius"] = app->add_option("--nms-radius", d.nms_radius, "NMS radius r_NMS (px, Chebyshev)");
    options["detector.top_k"] = app->add_option("--top-k", d.top_k, "Maximum keypoints per image k");
    options["detector.threshold"] = app->add_option("--threshold", d.gradient_threshold, "Minimum gradient score");
    options["detector.patch_size"] = app->add_option("--patch-size", d.patch_size, "Grid cell size (px)");
    options["detector.kernel_size"] = app->add_option("--kernel-size", d.gaussian_kernel, "Gaussian kernel size");
    options["detector.sigma"] = app->add_option("--sigma", d.gaussian_std, "Gaussian standard deviation");
    options["descriptor.fusion_weights"] =
        app->add_option("--fusion-weights", values.fusion_weights, "Fusion weights FMAP (192 x 449 x 1); empty = seeded random");
    options["descriptor.provider"] = app->add_option("--provider", provider, "Dense features: classical or file (manifest maps)")
                                         ->check(CLI::IsMember({"classical", "file"}));
    options["matcher.backend"] = app->add_option("--backend", backend, "Matcher: learned, mutual_nn or tracks")
                                     ->check(CLI::IsMember({"learned", "mutual_nn", "tracks"}));
    options["matcher.weights"] =
        app->add_option("--weights", values.matcher_weights, "Matcher weights manifest (matcher.txt); implies --backend learned");
    options["matcher.threshold"] =
        app->add_option("--match-threshold", values.match_threshold, "Learned matcher: minimum assignment probability");
    if (odometry) {
      options["keyframe_threshold"] =
          app->add_option("--keyframe-threshold", values.keyframe_threshold, "Keyframe threshold on mean displacement (px)");
      options["stride"] = app->add_option("--stride", values.stride, "Process every stride-th frame");
      options["consensus.iterations"] =
          app->add_option("--consensus-iterations", values.consensus_iterations, "Consensus filter iterations, 0 = off");
    }
  }

  /// Config file, then --set, then explicit flags, then --seed.
  PipelineConfig build(const CLI::Option* seed_opt, std::uint64_t seed) const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : load_config(config);
    for (const auto& s : settings) {
      const auto [k, v] = split_setting(s);
      apply_setting(cfg, k, v);
    }
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      if (key == "detector.nms_radius") cfg.detector.nms_radius = values.detector.nms_radius;
      else if (key == "detector.top_k") cfg.detector.top_k = values.detector.top_k;
      else if (key == "detector.threshold") cfg.detector.gradient_threshold = values.detector.gradient_threshold;
      else if (key == "detector.patch_size") cfg.detector.patch_size = values.detector.patch_size;
      else if (key == "detector.kernel_size") cfg.detector.gaussian_kernel = values.detector.gaussian_kernel;
      else if (key == "detector.sigma") cfg.detector.gaussian_std = values.detector.gaussian_std;
      else if (key == "descriptor.fusion_weights") cfg.fusion_weights = values.fusion_weights;
      else if (key == "descriptor.provider") apply_setting(cfg, key, provider);
      else if (key == "matcher.backend") apply_setting(cfg, key, backend);
      else if (key == "matcher.weights") {
        cfg.matcher_weights = values.matcher_weights;
        if (options.at("matcher.backend")->count() == 0) cfg.backend = MatcherBackend::learned;
      } else if (key == "matcher.threshold") cfg.match_threshold = values.match_threshold;
      else if (key == "keyframe_threshold") cfg.keyframe_threshold = values.keyframe_threshold;
      else if (key == "stride") cfg.stride = values.stride;
      else if (key == "consensus.iterations") cfg.consensus_iterations = values.consensus_iterations;
    }
    if (seed_opt->count() > 0) {
      cfg.fusion_seed = seed;
      cfg.consensus_seed = seed;
    }
    return cfg;
  }
};

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw InvalidArgument("cannot write " + path);
  file << std::setprecision(10);
  return file;
}

void finish_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return;
  file.close();
  if (!file) throw InvalidArgument("write failed for " + path);
}

TrajectoryFormat resolve_format(const std::string& flag, const fs::path& path) {
  if (flag == "kitti") return TrajectoryFormat::kitti;
  if (flag == "tum") return TrajectoryFormat::tum;
  return format_from_extension(path);
}

void write_pose(std::ostream& out, const Pose& p) {
  const Eigen::Matrix4d m = p.matrix();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) out << (r || c ? " " : "") << m(r, c);
  }
  out << "\n";
}

FrameFeatures frame_features(const SequenceManifest& m, const PipelineConfig& cfg, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= m.size()) {
    throw InvalidArgument("frame index " + std::to_string(index) + " out of range [0, " + std::to_string(m.size()) + ")");
  }
  return FeatureExtractor(cfg, m.intrinsics).from_entry(m.frames[static_cast<std::size_t>(index)], index);
}

MatchSet match_frames(const SequenceManifest& m, const PipelineConfig& cfg, int a, int b) {
  cfg.validate();
  std::optional<MatcherWeights> weights;
  if (cfg.backend == MatcherBackend::learned) weights = load_matcher_weights(cfg.matcher_weights);
  PipelineConfig unit = cfg;
  unit.scale_source = ScaleSource::unit;
  const VisualOdometry vo(unit, m.intrinsics, std::move(weights));
  return vo.match(frame_features(m, cfg, a), frame_features(m, cfg, b));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dinovo: monocular visual odometry toolkit", "dinovo"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Help for every command");
  std::uint64_t seed = 0;
  app.fallthrough();
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Seed for every random choice");
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads; > 1 prefetches frame features")->check(CLI::PositiveNumber);

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "Detect keypoints; prints one 'x y score' per line (x = row)");
  std::string image_path, out_path;
  PipelineFlags detect_flags;
  detect_cmd->add_option("--image", image_path, "Input PGM/PPM image")->required()->check(CLI::ExistingFile);
  detect_cmd->add_option("--out", out_path, "Output file, '-' or empty for stdout");
  detect_flags.add(detect_cmd, false);

  // describe
  auto* describe_cmd = app.add_subcommand("describe", "Describe keypoints; prints 'x y d_1 ... d_192' per line");
  std::string coarse_path, fine_path;
  PipelineFlags describe_flags;
  describe_cmd->add_option("--image", image_path, "Input PGM/PPM image")->required()->check(CLI::ExistingFile);
  describe_cmd->add_option("--coarse", coarse_path, "Coarse feature map FMAP (stride 14, 384 channels)");
  describe_cmd->add_option("--fine", fine_path, "Fine feature map FMAP (stride 1, 64 channels)");
  describe_cmd->add_option("--out", out_path, "Output file, '-' or empty for stdout");
  describe_flags.add(describe_cmd, false);

  // match
  auto* match_cmd = app.add_subcommand("match", "Match two manifest frames; prints the matches and relative pose");
  std::string manifest_path;
  int frame_a = 0, frame_b = 1;
  PipelineFlags match_flags;
  match_cmd->add_option("--manifest", manifest_path, "Sequence manifest")->required()->check(CLI::ExistingFile);
  match_cmd->add_option("--frame-a", frame_a, "First frame index");
  match_cmd->add_option("--frame-b", frame_b, "Second frame index");
  match_cmd->add_option("--out", out_path, "Output file, '-' or empty for stdout");
  match_flags.add(match_cmd, false);

  // odometry
  auto* odo_cmd = app.add_subcommand("odometry", "Run frame-to-keyframe odometry over a manifest");
  std::string gt_path, format = "auto", scale = "auto";
  int gt_stride = 1;
  PipelineFlags odo_flags;
  odo_cmd->add_option("--manifest", manifest_path, "Sequence manifest")->required()->check(CLI::ExistingFile);
  odo_cmd->add_option("--out", out_path, "Output trajectory (.kitti.txt or .tum.txt)")->required();
  odo_cmd->add_option("--format", format, "Output format, auto = from the extension")
      ->check(CLI::IsMember({"auto", "kitti", "tum"}));
  odo_cmd->add_option("--gt", gt_path, "Ground-truth trajectory for translation scaling (overrides the manifest)")
      ->check(CLI::ExistingFile);
  odo_cmd->add_option("--scale", scale, "Translation scale: ground_truth, unit, or auto (ground truth when available)")
      ->check(CLI::IsMember({"auto", "ground_truth", "unit"}));
  odo_flags.add(odo_cmd, true);

  // eval-ate / eval-rpe
  std::string est_path, mode = "sim3", csv_path;
  int est_stride = 1, rpe_step = 10;
  auto add_eval_io = [&](CLI::App* cmd) {
    cmd->add_option("--est", est_path, "Estimated trajectory")->required()->check(CLI::ExistingFile);
    cmd->add_option("--gt", gt_path, "Ground-truth trajectory")->required()->check(CLI::ExistingFile);
    cmd->add_option("--format", format, "Input format for both files, auto = from the extension")
        ->check(CLI::IsMember({"auto", "kitti", "tum"}));
    cmd->add_option("--est-stride", est_stride, "Frame id step of a KITTI --est file")->check(CLI::PositiveNumber);
    cmd->add_option("--gt-stride", gt_stride, "Frame id step of a KITTI --gt file")->check(CLI::PositiveNumber);
    cmd->add_option("--csv", csv_path, "Also write metric,sequence,value rows here");
  };
  auto* ate_cmd = app.add_subcommand("eval-ate", "Absolute trajectory error after alignment");
  add_eval_io(ate_cmd);
  ate_cmd->add_option("--mode", mode, "Alignment: sim3 (with scale) or se3")->check(CLI::IsMember({"sim3", "se3"}));
  auto* rpe_cmd = app.add_subcommand("eval-rpe", "KITTI relative drift t_rel (%) and r_rel (deg/100 m)");
  add_eval_io(rpe_cmd);
  rpe_cmd->add_option("--step", rpe_step, "Segment start spacing in frames")->check(CLI::PositiveNumber);

  // eval-match
  auto* em_cmd = app.add_subcommand("eval-match", "Matching accuracy of two manifest frames against depth and poses");
  PipelineFlags em_flags;
  em_cmd->add_option("--manifest", manifest_path, "Sequence manifest with depth and ground truth")
      ->required()
      ->check(CLI::ExistingFile);
  em_cmd->add_option("--frame-a", frame_a, "First frame index");
  em_cmd->add_option("--frame-b", frame_b, "Second frame index");
  em_cmd->add_option("--csv", csv_path, "Also write metric,sequence,value rows here");
  em_flags.add(em_cmd, false);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic sequence with ground truth");
  SyntheticConfig sc;
  std::string synth_mode = "direct", out_dir, name = "synthetic";
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  synth_cmd->add_option("--frames", sc.frames, "Number of frames");
  synth_cmd->add_option("--mode", synth_mode, "direct (track files) or rendered (images)")
      ->check(CLI::IsMember({"direct", "rendered"}));
  synth_cmd->add_option("--points", sc.points, "Number of 3-D points");
  synth_cmd->add_option("--path-length", sc.path_length, "Camera path length (m)");
  synth_cmd->add_option("--noise", sc.pixel_noise, "Pixel noise standard deviation (px)");
  synth_cmd->add_option("--outliers", sc.outlier_fraction, "Fraction of track observations replaced by outliers");
  synth_cmd->add_option("--name", name, "Sequence name written to the manifest");

  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) {
    sub->footer("Global options (before or after the command): --seed UINT [0], --threads INT [1]");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "dinovo: " << e.what() << "\n";
    return 1;
  }

  try {
    std::ofstream file;
    if (detect_cmd->parsed()) {
      const PipelineConfig cfg = detect_flags.build(seed_opt, seed);
      const KeypointSet kp = detect(read_pnm(image_path), cfg.detector);
      std::ostream& out = open_output(out_path, file);
      for (const auto& k : kp.points) out << k.x << " " << k.y << " " << k.score << "\n";
      finish_output(out_path, file);
    } else if (describe_cmd->parsed()) {
      const PipelineConfig cfg = describe_flags.build(seed_opt, seed);
      if (coarse_path.empty() != fine_path.empty()) throw InvalidArgument("describe: give both --coarse and --fine or neither");
      const GrayImage img = read_pnm(image_path);
      const FusionWeights w = cfg.fusion_weights.empty() ? FusionWeights::random(cfg.fusion_seed)
                                                         : FusionWeights::from_tensor(read_fmap(cfg.fusion_weights));
      const FeatureMaps maps = coarse_path.empty() ? provider_classical(img) : provider_file(coarse_path, fine_path);
      const DescriptorSet d = describe(detect(img, cfg.detector), maps, w, cfg.normalize_descriptors);
      std::ostream& out = open_output(out_path, file);
      for (std::size_t i = 0; i < d.size(); ++i) {
        out << d.keypoints[i].x << " " << d.keypoints[i].y;
        for (Eigen::Index c = 0; c < d.descriptors.cols(); ++c) out << " " << d.descriptors(static_cast<Eigen::Index>(i), c);
        out << "\n";
      }
      finish_output(out_path, file);
    } else if (match_cmd->parsed()) {
      const PipelineConfig cfg = match_flags.build(seed_opt, seed);
      const SequenceManifest m = load_manifest(manifest_path);
      m.validate();
      const MatchSet ms = match_frames(m, cfg, frame_a, frame_b);
      std::ostream& out = open_output(out_path, file);
      out << "# first second x_a y_a x_b y_b probability confidence\n";
      for (const auto& mt : ms.matches) {
        const auto& ka = ms.keypoints_a[static_cast<std::size_t>(mt.first)];
        const auto& kb = ms.keypoints_b[static_cast<std::size_t>(mt.second)];
        out << mt.first << " " << mt.second << " " << ka.x << " " << ka.y << " " << kb.x << " " << kb.y << " "
            << mt.probability << " " << mt.confidence << "\n";
      }
      out << "# matches " << ms.size() << "\n";
      try {
        CorrespondenceSet c = make_correspondences(ms, m.intrinsics);
        if (cfg.consensus_iterations > 0) {
          c = consensus_filter(c, cfg.consensus_iterations, cfg.consensus_threshold / (0.5 * (m.intrinsics.fx + m.intrinsics.fy)),
                               cfg.consensus_seed);
        }
        out << "# pose b_from_a (3x4, unit translation)\n";
        write_pose(out, estimate_relative_pose(c, cfg.cheirality_weighted).as_pose(1.0));
      } catch (const DegenerateGeometry& e) {
        out << "# pose unavailable: " << e.what() << "\n";
      } catch (const InvalidArgument& e) {
        out << "# pose unavailable: " << e.what() << "\n";
      }
      finish_output(out_path, file);
    } else if (odo_cmd->parsed()) {
      PipelineConfig cfg = odo_flags.build(seed_opt, seed);
      SequenceManifest m = load_manifest(manifest_path);
      if (!gt_path.empty()) {
        m.groundtruth = fs::path(gt_path);
        m.groundtruth_format = format_from_extension(gt_path);
      }
      if (scale == "unit") cfg.scale_source = ScaleSource::unit;
      else if (scale == "ground_truth") cfg.scale_source = ScaleSource::ground_truth;
      else if (!m.groundtruth) cfg.scale_source = ScaleSource::unit;
      const SequenceResult r = run_sequence(m, cfg, threads);
      const TrajectoryFormat f = resolve_format(format, out_path);
      if (f == TrajectoryFormat::kitti) {
        write_trajectory_kitti(out_path, r.trajectory);
      } else {
        write_trajectory_tum(out_path, r.trajectory);
      }
      std::size_t keyframes = 0;
      for (std::size_t i = 0; i < r.trajectory.size(); ++i) keyframes += r.trajectory[i].keyframe ? 1 : 0;
      std::cout << "frames " << r.trajectory.size() << " keyframes " << keyframes << " untracked " << r.untracked
                << " -> " << out_path << "\n";
    } else if (ate_cmd->parsed() || rpe_cmd->parsed()) {
      const Trajectory est = load_trajectory(est_path, resolve_format(format, est_path), est_stride);
      const Trajectory gt = load_trajectory(gt_path, resolve_format(format, gt_path), gt_stride);
      const std::string seq = fs::path(gt_path).stem().string();
      std::vector<MetricRow> rows;
      if (ate_cmd->parsed()) {
        const AteReport r = ate_report(est, gt, mode == "se3" ? AlignmentMode::se3 : AlignmentMode::sim3);
        std::cout << std::fixed << std::setprecision(3) << "ATE " << r.rmse << " m (" << mode << ", " << r.pairs
                  << " poses, scale " << r.alignment.scale() << ")\n";
        rows = metric_rows(r, seq);
      } else {
        const DriftReport r = kitti_drift(est, gt, static_cast<std::size_t>(rpe_step));
        if (r.empty) throw InvalidArgument("eval-rpe: no segment of 100 m or more in the ground truth");
        std::cout << std::fixed << std::setprecision(3) << "t_rel " << r.t_rel << " % r_rel " << r.r_rel
                  << " deg/100m (" << r.segments << " segments)\n";
        rows = metric_rows(r, seq);
      }
      if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        write_csv(csv, rows);
        if (!csv) throw InvalidArgument("cannot write " + csv_path);
      }
    } else if (em_cmd->parsed()) {
      const PipelineConfig cfg = em_flags.build(seed_opt, seed);
      const SequenceManifest m = load_manifest(manifest_path);
      m.validate();
      const auto gt = groundtruth_poses(m);
      auto check = [&](int i) {
        if (i < 0 || static_cast<std::size_t>(i) >= m.size()) throw InvalidArgument("eval-match: frame index out of range");
        if (!gt[static_cast<std::size_t>(i)]) throw InvalidArgument("eval-match: no ground-truth pose for frame " + std::to_string(i));
      };
      check(frame_a);
      check(frame_b);
      const auto& ea = m.frames[static_cast<std::size_t>(frame_a)];
      if (!ea.depth) throw InvalidArgument("eval-match: manifest has no depth maps");
      const DepthMap depth = read_depth(*ea.depth);
      const Pose b_from_a = gt[static_cast<std::size_t>(frame_b)]->inverse() * *gt[static_cast<std::size_t>(frame_a)];
      const MatchSet ms = match_frames(m, cfg, frame_a, frame_b);
      const MatchLabels labels = gt_correspondences(ms.keypoints_a, depth, b_from_a, m.intrinsics, ms.keypoints_b);
      const MatchingMetrics r = matching_metrics(ms, labels, depth, b_from_a, m.intrinsics);
      std::cout << std::fixed << std::setprecision(3) << "MMA@1 " << r.mma[0] << " MMA@3 " << r.mma[1] << " MMA@5 "
                << r.mma[2] << " MMA@10 " << r.mma[3] << " recall@5 " << r.recall << " (" << r.predicted
                << " predicted, " << r.groundtruth << " ground-truth matches)\n";
      if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        write_csv(csv, metric_rows(r, m.name.empty() ? "sequence" : m.name));
        if (!csv) throw InvalidArgument("cannot write " + csv_path);
      }
    } else if (synth_cmd->parsed()) {
      sc.mode = synth_mode == "rendered" ? SyntheticMode::rendered : SyntheticMode::direct;
      const auto seqn = generate_sequence(make_scene(sc, seed), sc.mode, seed);
      const fs::path manifest = write_sequence(out_dir, seqn, name);
      std::cout << "wrote " << seqn.frames.size() << " frames -> " << manifest.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "dinovo: " << msg << "\n";
    return 1;
  }
  return 0;
}
