// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "dinovo/dinovo.hpp"
#include "oracles.hpp"

using namespace dinovo;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 3, bool sci = false) {
  std::ostringstream s;
  if (sci) s << std::scientific;
  else s << std::fixed;
  s << std::setprecision(precision) << v;
  return s.str();
}

CorrespondenceSet from_scene(const oracle::TwoViewScene& s) {
  CorrespondenceSet c;
  c.first = s.x1;
  c.second = s.x2;
  c.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s.x1.size()));
  return c;
}

Verdict eight_point_exactness() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> count(20, 100);
  std::vector<oracle::TwoViewScene> scenes;
  for (int i = 0; i < 200; ++i) scenes.push_back(oracle::two_view_scene(rng, count(rng)));
  int ok = 0;
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& s : scenes) {
    try {
      const auto rp = estimate_relative_pose(from_scene(s));
      const double err = std::max(oracle::rotation_distance(rp.rotation.matrix(), s.r),
                                  oracle::direction_distance(rp.direction, s.t));
      worst = std::max(worst, err);
      ok += err <= 1e-6 ? 1 : 0;
    } catch (const Error&) {
      worst = std::numeric_limits<double>::infinity();
    }
  }
  const double secs = seconds_since(t0);
  return {ok == 200 && secs < 5.0,
          std::to_string(ok) + "/200 within 1e-6 rad, worst " + fmt(worst, 2, true) + " rad, " + fmt(secs) + " s"};
}

Verdict weighting_equivalence() {
  std::mt19937_64 rng(1002);
  std::uniform_int_distribution<int> count(20, 100);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  int ok = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = oracle::two_view_scene(rng, count(rng));
    auto full = from_scene(s);
    CorrespondenceSet inliers;
    std::vector<std::size_t> idx(full.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t outliers = full.size() / 4;
    std::vector<bool> is_out(full.size(), false);
    for (std::size_t k = 0; k < outliers; ++k) is_out[idx[k]] = true;
    std::vector<double> w;
    for (std::size_t i = 0; i < full.size(); ++i) {
      if (is_out[i]) {
        full.second[i] = Eigen::Vector2d(u(rng), u(rng));
        full.weights(static_cast<Eigen::Index>(i)) = 0.0;
      } else {
        inliers.first.push_back(full.first[i]);
        inliers.second.push_back(full.second[i]);
        w.push_back(1.0);
      }
    }
    inliers.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    try {
      const auto a = estimate_relative_pose(full), b = estimate_relative_pose(inliers);
      const double err = std::max((a.rotation.matrix() - b.rotation.matrix()).cwiseAbs().maxCoeff(),
                                  (a.direction - b.direction).cwiseAbs().maxCoeff());
      worst = std::max(worst, err);
      ok += err <= 1e-8 ? 1 : 0;
    } catch (const Error&) {
      worst = std::numeric_limits<double>::infinity();
    }
  }
  return {ok == 200, std::to_string(ok) + "/200 equal to the inlier-only solve, max entry difference " + fmt(worst, 2, true)};
}

Verdict detector_contract() {
  std::mt19937_64 rng(1003);
  std::uniform_int_distribution<int> rows(20, 480), cols(20, 640);
  std::uniform_real_distribution<double> contrast(0.002, 1.0);
  const DetectorConfig cfg;
  int ok = 0;
  std::size_t max_count = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Grid<double> pixels = oracle::random_image(rng, rows(rng), cols(rng)).pixels();
    const double c = contrast(rng);
    for (int r = 0; r < pixels.rows(); ++r) {
      for (int q = 0; q < pixels.cols(); ++q) pixels(r, q) *= c;
    }
    const GrayImage img(std::move(pixels));
    const auto kp = detect(img, cfg);
    bool good = kp.size() <= static_cast<std::size_t>(cfg.top_k);
    std::set<std::pair<int, int>> cells;
    for (std::size_t i = 0; i < kp.size(); ++i) {
      const auto& k = kp[i];
      good &= k.score >= cfg.gradient_threshold;
      const int cr = static_cast<int>(k.x) / cfg.patch_size, cc = static_cast<int>(k.y) / cfg.patch_size;
      good &= cells.emplace(cr, cc).second;
      good &= (cr + 1) * cfg.patch_size <= img.rows() && (cc + 1) * cfg.patch_size <= img.cols();
      for (std::size_t j = i + 1; j < kp.size(); ++j) {
        good &= std::max(std::abs(k.x - kp[j].x), std::abs(k.y - kp[j].y)) > cfg.nms_radius;
      }
    }
    max_count = std::max(max_count, kp.size());
    ok += good ? 1 : 0;
  }
  const GrayImage ref = oracle::random_image(rng, 476, 630);
  const auto first = detect(ref, cfg);
  int identical = 0;
  for (int run = 0; run < 10; ++run) {
    const auto again = detect(ref, cfg);
    bool same = again.size() == first.size();
    for (std::size_t i = 0; same && i < first.size(); ++i) {
      same = std::memcmp(&again[i], &first[i], sizeof(Keypoint)) == 0;
    }
    identical += same ? 1 : 0;
  }
  return {ok == 100 && identical == 10, std::to_string(ok) + "/100 images satisfy the contract (max " +
                                            std::to_string(max_count) + " keypoints), 476x630 bit-identical in " +
                                            std::to_string(identical) + "/10 runs (" + std::to_string(first.size()) +
                                            " keypoints)"};
}

DescriptorSet random_set(std::mt19937_64& rng, int n, int dim) {
  std::uniform_int_distribution<int> ur(0, 475), uc(0, 629);
  std::normal_distribution<double> g(0.0, 1.0);
  KeypointSet kp{476, 630, {}};
  for (int i = 0; i < n; ++i) kp.points.push_back({double(ur(rng)), double(uc(rng)), 1.0});
  Eigen::MatrixXd d = Eigen::MatrixXd::NullaryExpr(n, dim, [&] { return g(rng); });
  return make_descriptor_set(std::move(kp), std::move(d));
}

DescriptorSet permuted(const DescriptorSet& s, const std::vector<int>& perm) {
  KeypointSet kp{s.keypoints.image_rows, s.keypoints.image_cols, {}};
  Eigen::MatrixXd d(s.descriptors.rows(), s.descriptors.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    kp.points.push_back(s.keypoints[static_cast<std::size_t>(perm[i])]);
    d.row(static_cast<Eigen::Index>(i)) = s.descriptors.row(perm[i]);
  }
  return make_descriptor_set(std::move(kp), std::move(d));
}

Verdict assignment_properties() {
  std::mt19937_64 rng(1004);
  const auto w = MatcherWeights::random(1004);
  bool bounds = true, injective = true, equivariant = true;
  double max_sum = 0.0, perm_err = 0.0, transpose_err = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const auto a = random_set(rng, 64, w.dim()), b = random_set(rng, 64, w.dim());
    const auto [fa, fb] = attend(a, b, w);
    const auto p = assignment(fa, fb, w);
    const Eigen::MatrixXd& m = p.probabilities;
    bounds &= m.minCoeff() >= 0.0 && m.maxCoeff() <= 1.0;
    max_sum = std::max({max_sum, m.rowwise().sum().maxCoeff(), m.colwise().sum().maxCoeff()});
    const auto matches = extract_matches(p, fa, fb, w, 0.0);
    std::set<int> ua, ub;
    for (const auto& x : matches.matches) injective &= ua.insert(x.first).second && ub.insert(x.second).second;

    std::vector<int> pa(64), pb(64);
    std::iota(pa.begin(), pa.end(), 0);
    std::iota(pb.begin(), pb.end(), 0);
    std::shuffle(pa.begin(), pa.end(), rng);
    std::shuffle(pb.begin(), pb.end(), rng);
    const auto [ga, gb] = attend(permuted(a, pa), permuted(b, pb), w);
    const auto p2 = assignment(ga, gb, w);
    for (int i = 0; i < 64; ++i) {
      for (int j = 0; j < 64; ++j) perm_err = std::max(perm_err, std::abs(p2.probabilities(i, j) - m(pa[i], pb[j])));
    }
    std::set<std::pair<int, int>> s1, s2;
    for (const auto& x : matches.matches) s1.emplace(x.first, x.second);
    for (const auto& x : extract_matches(p2, ga, gb, w, 0.0).matches) s2.emplace(pa[x.first], pb[x.second]);
    equivariant &= s1 == s2;

    for (const auto& layer : w.layers) {
      const auto ab = cross_attention_scores(layer.cross, w, a.descriptors, b.descriptors);
      const auto ba = cross_attention_scores(layer.cross, w, b.descriptors, a.descriptors);
      for (std::size_t h = 0; h < ab.size(); ++h) {
        transpose_err = std::max(transpose_err, (ab[h] - ba[h].transpose()).cwiseAbs().maxCoeff());
      }
    }
  }
  equivariant &= perm_err <= 1e-12;
  const bool pass = bounds && max_sum <= 1.0 + 1e-6 && injective && equivariant && transpose_err <= 1e-10;
  return {pass, std::string("P in [0,1] ") + (bounds ? "yes" : "no") + ", max marginal " + fmt(max_sum, 6) +
                    ", injective " + (injective ? "yes" : "no") + ", permuted matches identical " +
                    (equivariant ? "yes" : "no") + " (P within " + fmt(perm_err, 1, true) +
                    "), cross transposition error " + fmt(transpose_err, 1, true)};
}

Verdict losses() {
  AssignmentMatrix p{Eigen::MatrixXd::Zero(4, 4), Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)};
  p.probabilities(0, 2) = p.probabilities(1, 0) = p.probabilities(2, 1) = 1.0;
  const double lm = match_loss({p, p, p}, MatchLabels{{{0, 2}, {1, 0}, {2, 1}}, {3}, {3}});
  std::mt19937_64 rng(1005);
  std::normal_distribution<double> g(0.0, 1.0);
  double identical = 0.0, scaled = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Pose gt(Rotation::from_matrix(oracle::random_rotation(rng, 3.0)), Eigen::Vector3d(g(rng), g(rng), g(rng)));
    identical = std::max(identical, pose_loss(gt, gt));
    const double s = std::exp(3.0 * g(rng));
    scaled = std::max(scaled, pose_loss(Pose(gt.rotation(), s * gt.translation()), gt));
  }
  const double m = 0.731, q = 12.5;
  const bool endpoints = total_loss(m, q, 0.0) == m && total_loss(m, q, 1.0) == q;
  return {lm == 0.0 && identical == 0.0 && scaled <= 1e-12 && endpoints,
          "match_loss(perfect) = " + fmt(lm, 1, true) + ", pose_loss identical max " + fmt(identical, 1, true) +
              ", scaled max " + fmt(scaled, 1, true) + ", total_loss endpoints exact " + (endpoints ? "yes" : "no")};
}

Verdict end_to_end() {
  SyntheticConfig sc;
  sc.frames = 50;
  sc.path_length = 20.0;
  sc.pixel_noise = 0.2;
  const fs::path root = oracle::scratch_dir("acceptance_vo");
  const auto direct = generate_sequence(make_scene(sc, 0), SyntheticMode::direct, 0);
  PipelineConfig dc;
  dc.backend = MatcherBackend::tracks;
  const auto t0 = std::chrono::steady_clock::now();
  const auto dr = run_sequence(load_manifest(write_sequence(root / "direct", direct, "direct")), dc, 2);
  const double ate_direct = ate(dr.trajectory, direct.groundtruth, AlignmentMode::sim3);
  const double t_direct = seconds_since(t0);

  SyntheticConfig rc = sc;
  rc.pixel_noise = 0.0;
  const auto rendered = generate_sequence(make_scene(rc, 0), SyntheticMode::rendered, 0);
  PipelineConfig cc;
  cc.provider = DescriptorProvider::classical;
  cc.backend = MatcherBackend::mutual_nn;
  cc.consensus_iterations = 2000;
  cc.consensus_threshold = 1.0;
  const auto t1 = std::chrono::steady_clock::now();
  const auto rr = run_sequence(load_manifest(write_sequence(root / "rendered", rendered, "rendered")), cc, 4);
  const double ate_rendered = ate(rr.trajectory, rendered.groundtruth, AlignmentMode::sim3);
  const double t_rendered = seconds_since(t1);
  fs::remove_all(root);
  return {ate_direct < 0.05 && ate_rendered < 0.5,
          "direct Sim3 ATE " + fmt(ate_direct, 4) + " m (< 0.05, " + std::to_string(dr.untracked) + " untracked, " +
              fmt(t_direct, 1) + " s), rendered Sim3 ATE " + fmt(ate_rendered, 4) + " m (< 0.5, " +
              std::to_string(rr.untracked) + " untracked, " + fmt(t_rendered, 1) + " s), 20 m path"};
}

Trajectory wavy_path(std::size_t n, double spacing) {
  Trajectory t(true);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = spacing * static_cast<double>(i);
    const double yaw = 0.3 * std::sin(s / 60.0);
    t.push_back({static_cast<std::int64_t>(i), 0.1 * static_cast<double>(i),
                 Pose(Rotation::about_y(yaw), Eigen::Vector3d(s, 0.5 * std::sin(s / 40.0), 20.0 * std::sin(s / 150.0))),
                 false, true, false});
  }
  return t;
}

Verdict metric_consistency() {
  const Trajectory gt = wavy_path(900, 1.0);
  const double self_ate = ate(gt, gt, AlignmentMode::sim3), self_ate_se3 = ate(gt, gt, AlignmentMode::se3);
  const auto self_drift = kitti_drift(gt, gt);

  std::mt19937_64 rng(1007);
  Trajectory noisy(true);
  std::normal_distribution<double> g(0.0, 0.3);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    auto f = gt[i];
    f.pose = Pose(f.pose.rotation(), f.pose.translation() + Eigen::Vector3d(g(rng), g(rng), g(rng)));
    noisy.push_back(f);
  }
  const Pose sim(Rotation::from_matrix(oracle::random_rotation(rng, 2.0)), Eigen::Vector3d(40, -7, 3), 2.7);
  Trajectory moved(true);
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    auto f = noisy[i];
    f.pose = sim * f.pose;
    moved.push_back(f);
  }
  const double base = ate(noisy, gt, AlignmentMode::sim3), after = ate(moved, gt, AlignmentMode::sim3);

  Trajectory biased(true);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    auto f = gt[i];
    f.pose = Pose(f.pose.rotation(), 1.01 * f.pose.translation());
    biased.push_back(f);
  }
  const auto bias = kitti_drift(biased, gt);
  const bool pass = self_ate == 0.0 && self_ate_se3 == 0.0 && !self_drift.empty && self_drift.t_rel == 0.0 &&
                    self_drift.r_rel == 0.0 && std::abs(base - after) <= 1e-9 && !bias.empty &&
                    std::abs(bias.t_rel - 1.0) <= 0.05;
  return {pass, "ate(gt,gt) = " + fmt(self_ate, 1, true) + ", drift(gt,gt) = (" + fmt(self_drift.t_rel, 1, true) + ", " +
                    fmt(self_drift.r_rel, 1, true) + "), ATE change under similarity " +
                    fmt(std::abs(base - after), 1, true) + ", 1% scale bias t_rel " + fmt(bias.t_rel, 4) + " %"};
}

Verdict keyframe_rule() {
  const CameraIntrinsics k{400.0, 400.0, 315.0, 238.0, 630, 476};
  std::mt19937_64 rng(1008);
  std::uniform_real_distribution<double> ux(-3.0, 3.0), uy(-2.0, 2.0), uz(6.0, 14.0);
  std::vector<Eigen::Vector3d> pts;
  double inv_depth = 0.0;
  for (int i = 0; i < 80; ++i) {
    pts.emplace_back(ux(rng), uy(rng), uz(rng));
    inv_depth += 1.0 / pts.back().z();
  }
  inv_depth /= static_cast<double>(pts.size());
  PipelineConfig cfg;
  cfg.backend = MatcherBackend::tracks;
  const FeatureExtractor fx(cfg, k);
  auto frame = [&](const Pose& cam, std::int64_t id) {
    std::vector<TrackObservation> obs;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Eigen::Vector2d uv = project(cam.inverse() * pts[i], k);
      obs.push_back({static_cast<std::int64_t>(i), uv.y(), uv.x(), false});
    }
    return fx.from_tracks(obs, id, static_cast<double>(id));
  };
  std::vector<bool> decision;
  std::vector<double> shown;
  for (const double target : {23.9, 24.1}) {
    VisualOdometry vo(cfg, k);
    const Pose cam(Rotation(), Eigen::Vector3d(target / (k.fx * inv_depth), 0, 0));
    vo.step(frame(Pose(), 0), Pose());
    const auto r = vo.step(frame(cam, 1), cam);
    decision.push_back(r.keyframe);
    shown.push_back(r.displacement);
  }
  return {!decision[0] && decision[1], "displacement " + fmt(shown[0], 6) + " px -> keyframe " +
                                           (decision[0] ? "yes" : "no") + ", " + fmt(shown[1], 6) + " px -> keyframe " +
                                           (decision[1] ? "yes" : "no") + " (threshold 24 px)"};
}

Verdict serialization() {
  std::mt19937_64 rng(1009);
  std::normal_distribution<double> g(0.0, 50.0);
  Trajectory t(true);
  for (int i = 0; i < 300; ++i) {
    t.push_back({i, 1.0e9 + 0.05 * i + 1e-4 * std::abs(g(rng)) / 50.0,
                 Pose(Rotation::from_matrix(oracle::random_rotation(rng, 3.1)), Eigen::Vector3d(g(rng), g(rng), g(rng))),
                 false, true, false});
  }
  const fs::path dir = oracle::scratch_dir("acceptance_io");
  write_trajectory_kitti(dir / "t.kitti.txt", t);
  write_trajectory_tum(dir / "t.tum.txt", t);
  const auto kitti = load_trajectory_kitti(dir / "t.kitti.txt");
  const auto tum = load_trajectory_tum(dir / "t.tum.txt");
  double kitti_err = 0.0, tum_err = 0.0;
  bool sizes = kitti.size() == t.size() && tum.size() == t.size();
  for (std::size_t i = 0; sizes && i < t.size(); ++i) {
    kitti_err = std::max(kitti_err, (kitti[i].pose.matrix() - t[i].pose.matrix()).cwiseAbs().maxCoeff());
    tum_err = std::max({tum_err, (tum[i].pose.matrix() - t[i].pose.matrix()).cwiseAbs().maxCoeff(),
                        std::abs(tum[i].timestamp - t[i].timestamp)});
  }
  Tensor3f f{9, 11, 5, std::vector<float>(9 * 11 * 5)};
  std::uniform_int_distribution<std::uint32_t> bits;
  for (float& v : f.values) {
    do {
      const std::uint32_t b = bits(rng);
      std::memcpy(&v, &b, sizeof v);
    } while (!std::isfinite(v));
  }
  f.values[0] = -0.0f;
  f.values[1] = std::numeric_limits<float>::denorm_min();
  write_fmap(dir / "f.fmap", f);
  const auto back = read_fmap(dir / "f.fmap");
  const bool exact = back.rows == f.rows && back.cols == f.cols && back.channels == f.channels &&
                     back.values.size() == f.values.size() &&
                     std::memcmp(back.values.data(), f.values.data(), f.values.size() * sizeof(float)) == 0;
  fs::remove_all(dir);
  return {sizes && kitti_err <= 1e-9 && tum_err <= 1e-9 && exact,
          "KITTI max error " + fmt(kitti_err, 1, true) + ", TUM max error " + fmt(tum_err, 1, true) +
              ", FMAP bit-exact " + (exact ? "yes" : "no")};
}

Verdict kitti_manifest_smoke() {
  std::mt19937_64 rng(1010);
  const fs::path dir = oracle::scratch_dir("acceptance_kitti");
  fs::create_directories(dir / "image_0");
  fs::create_directories(dir / "features");
  const CameraIntrinsics k{200.0, 200.0, 167.5, 55.5, 336, 112};
  std::normal_distribution<float> g(0.0f, 1.0f);
  auto tensor = [&](std::uint32_t r, std::uint32_t c, std::uint32_t ch) {
    Tensor3f t{r, c, ch, std::vector<float>(static_cast<std::size_t>(r) * c * ch)};
    for (float& v : t.values) v = g(rng);
    return t;
  };
  Trajectory gt(false);
  std::ostringstream manifest;
  manifest << "[camera]\nfx = " << k.fx << "\nfy = " << k.fy << "\ncx = " << k.cx << "\ncy = " << k.cy
           << "\nwidth = " << k.width << "\nheight = " << k.height
           << "\n[sequence]\nname = kitti_smoke\ngroundtruth = poses.txt\ngroundtruth_format = kitti\n[frames]\n";
  const int frames = 6;
  for (int i = 0; i < frames; ++i) {
    std::ostringstream stem;
    stem << std::setw(6) << std::setfill('0') << i;
    write_pgm(dir / "image_0" / (stem.str() + ".pgm"), oracle::random_image(rng, k.height, k.width));
    write_fmap(dir / "features" / (stem.str() + ".coarse.fmap"), tensor(k.height / 14, k.width / 14, kCoarseChannels));
    write_fmap(dir / "features" / (stem.str() + ".fine.fmap"), tensor(k.height, k.width, kFineChannels));
    gt.push_back({i, static_cast<double>(i), Pose(Rotation::about_y(0.01 * i), Eigen::Vector3d(0.0, 0.0, 0.8 * i)),
                  false, true, false});
    manifest << 0.1 * i << " image_0/" << stem.str() << ".pgm coarse=features/" << stem.str()
             << ".coarse.fmap fine=features/" << stem.str() << ".fine.fmap\n";
  }
  write_trajectory_kitti(dir / "poses.txt", gt);
  std::ofstream(dir / "manifest.txt") << manifest.str();

  PipelineConfig cfg;
  cfg.stride = 1;
  cfg.provider = DescriptorProvider::file;
  cfg.backend = MatcherBackend::learned;
  cfg.matcher_weights = save_matcher_weights(dir / "weights", MatcherWeights::random(1010));
  write_fmap(dir / "weights" / "fusion.fmap", FusionWeights::random(1010).to_tensor());
  cfg.fusion_weights = dir / "weights" / "fusion.fmap";
  std::string detail;
  bool pass = false;
  try {
    const auto m = load_manifest(dir / "manifest.txt");
    const auto r = run_sequence(m, cfg, 2);
    write_trajectory_kitti(dir / "est.kitti.txt", r.trajectory);
    const auto back = load_trajectory_kitti(dir / "est.kitti.txt");
    pass = back.size() == static_cast<std::size_t>(frames);
    detail = std::to_string(back.size()) + "/" + std::to_string(frames) + " poses written as KITTI, " +
             std::to_string(r.untracked) + " untracked with random 12-layer weights";
  } catch (const std::exception& e) {
    detail = std::string("error: ") + e.what();
  }
  fs::remove_all(dir);
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"eight-point exactness", eight_point_exactness},
      {"confidence-weighting equivalence", weighting_equivalence},
      {"detector contract", detector_contract},
      {"assignment properties", assignment_properties},
      {"losses", losses},
      {"end-to-end synthetic VO", end_to_end},
      {"metric self-consistency", metric_consistency},
      {"keyframe rule", keyframe_rule},
      {"trajectory and feature-map round trips", serialization},
      {"KITTI manifest with feature maps and matcher weights", kitti_manifest_smoke},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << v.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
