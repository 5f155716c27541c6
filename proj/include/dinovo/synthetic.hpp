#ifndef DINOVO_SYNTHETIC_HPP
#define DINOVO_SYNTHETIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dinovo/error.hpp"
#include "dinovo/geometry.hpp"
#include "dinovo/image.hpp"
#include "dinovo/manifest.hpp"
#include "dinovo/supervision.hpp"
#include "dinovo/trajectory.hpp"

namespace dinovo {

enum class SyntheticMode { direct, rendered };

struct SyntheticConfig {
  int frames = 50;
  double path_length = 20.0;  ///< meters, first to last camera centre along world x
  int points = 800;
  double pixel_noise = 0.0;  ///< std of the jitter applied to observed positions (px)
  double outlier_fraction = 0.0;
  double frame_rate = 10.0;
  double yaw_amplitude = 0.05;    ///< rad
  double pitch_amplitude = 0.02;  ///< rad
  SyntheticMode mode = SyntheticMode::direct;
  CameraIntrinsics intrinsics{400.0, 400.0, 315.0, 238.0, 630, 476};

  void validate() const {
    if (frames < 2) throw InvalidArgument("synthetic: need at least 2 frames");
    if (!(path_length > 0.0)) throw InvalidArgument("synthetic: path length must be positive");
    if (points < 8) throw InvalidArgument("synthetic: need at least 8 points");
    if (!(pixel_noise >= 0.0)) throw InvalidArgument("synthetic: pixel noise must be >= 0");
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
      throw InvalidArgument("synthetic: outlier fraction must lie in [0, 1)");
    }
    if (!(frame_rate > 0.0)) throw InvalidArgument("synthetic: frame rate must be positive");
    intrinsics.validate();
  }
};

/// Points, per-point blob appearance and camera-to-world poses.
struct SyntheticScene {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> brightness;  ///< blob peak in [0.5, 1]
  std::vector<double> blob_sigma;  ///< blob std in pixels, [2, 3]
  std::vector<double> blob_shade;  ///< direction (rad, image plane) of the blob's steep side
  std::vector<Pose> poses;         ///< camera-to-world
  CameraIntrinsics intrinsics;
  double pixel_noise = 0.0;
  double outlier_fraction = 0.0;
  double frame_rate = 10.0;
};

/// Sideways sweep along world +x with the camera looking down +z, gently
/// oscillating in yaw and pitch, over a box of points 6 to 16 m deep.
inline SyntheticScene make_scene(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-8.0, cfg.path_length + 8.0), uy(-5.0, 5.0), uz(6.0, 16.0),
      ub(0.5, 1.0), us(2.0, 3.0), ua(0.0, 2.0 * std::numbers::pi);
  SyntheticScene s;
  s.intrinsics = cfg.intrinsics;
  s.pixel_noise = cfg.pixel_noise;
  s.outlier_fraction = cfg.outlier_fraction;
  s.frame_rate = cfg.frame_rate;
  for (int i = 0; i < cfg.points; ++i) {
    const double x = ux(rng), y = uy(rng), z = uz(rng);
    s.points.emplace_back(x, y, z);
    s.brightness.push_back(ub(rng));
    s.blob_sigma.push_back(us(rng));
    s.blob_shade.push_back(ua(rng));
  }
  const double step = cfg.path_length / (cfg.frames - 1);
  for (int i = 0; i < cfg.frames; ++i) {
    const double phase = 2.0 * std::numbers::pi * i / 25.0;
    const Rotation r = Rotation::about_y(cfg.yaw_amplitude * std::sin(phase)) *
                       Rotation::about_x(cfg.pitch_amplitude * std::sin(0.7 * phase));
    const Eigen::Vector3d c(step * i, 0.3 * std::sin(0.2 * i), 0.2 * std::sin(0.13 * i));
    s.poses.emplace_back(r, c);
  }
  return s;
}

/// Pixel (u, v) of point `p` seen from camera-to-world `pose`, if in front
/// of the camera and inside the image.
inline std::optional<Eigen::Vector2d> observe(const SyntheticScene& s, std::size_t p, const Pose& pose) {
  const Eigen::Vector3d pc = pose.inverse() * s.points[p];
  if (!(pc.z() > 0.0)) return std::nullopt;
  const Eigen::Vector2d uv = project(pc, s.intrinsics);
  if (!s.intrinsics.contains(uv)) return std::nullopt;
  return uv;
}

/// Throws InvalidArgument unless every consecutive frame pair shares at
/// least 8 visible points.
inline void validate_scene(const SyntheticScene& s) {
  if (s.poses.size() < 2) throw InvalidArgument("synthetic: need at least 2 poses");
  if (s.points.size() != s.brightness.size() || s.points.size() != s.blob_sigma.size() ||
      s.points.size() != s.blob_shade.size()) {
    throw InvalidArgument("synthetic: per-point attribute sizes differ");
  }
  for (std::size_t f = 0; f + 1 < s.poses.size(); ++f) {
    int shared = 0;
    for (std::size_t p = 0; p < s.points.size(); ++p) {
      if (observe(s, p, s.poses[f]) && observe(s, p, s.poses[f + 1])) ++shared;
    }
    if (shared < 8) {
      throw InvalidArgument("synthetic: frames " + std::to_string(f) + " and " + std::to_string(f + 1) +
                            " share fewer than 8 visible points");
    }
  }
}

struct SyntheticFrame {
  double timestamp = 0.0;
  std::vector<TrackObservation> tracks;  ///< direct mode only
  std::optional<GrayImage> image;        ///< rendered mode only
  DepthMap depth;
};

struct SyntheticSequence {
  CameraIntrinsics intrinsics;
  SyntheticMode mode = SyntheticMode::direct;
  Trajectory groundtruth;
  std::vector<SyntheticFrame> frames;
};

namespace detail {

struct Splat {
  Eigen::Vector2d uv;
  double depth;
  double brightness;
  double sigma;
  double shade;
};

/// Max-composited Gaussian blobs, each with its std halved on the side facing
/// its shade direction so that the gradient peak sits at a single point
/// rather than on a ring. Each pixel takes the depth of the blob that sets its
/// intensity; pixels untouched by any blob have depth 0.
inline void render_splats(const std::vector<Splat>& splats, const CameraIntrinsics& k, Grid<double>& image,
                          DepthMap& depth) {
  image = Grid<double>(k.height, k.width, 0.0);
  depth = DepthMap(k.height, k.width, 0.0);
  for (const auto& s : splats) {
    const int reach = static_cast<int>(std::ceil(3.0 * s.sigma));
    const double cu = std::cos(s.shade), cv = std::sin(s.shade);
    const int u0 = static_cast<int>(std::round(s.uv.x())), v0 = static_cast<int>(std::round(s.uv.y()));
    for (int v = std::max(0, v0 - reach); v <= std::min(k.height - 1, v0 + reach); ++v) {
      for (int u = std::max(0, u0 - reach); u <= std::min(k.width - 1, u0 + reach); ++u) {
        const double du = u - s.uv.x(), dv = v - s.uv.y();
        const double d2 = du * du + dv * dv;
        if (d2 > 9.0 * s.sigma * s.sigma) continue;
        const double a = du * cu + dv * cv, b = dv * cu - du * cv;
        const double sa = a > 0.0 ? 0.5 * s.sigma : s.sigma;
        const double val = s.brightness * std::exp(-0.5 * (a * a / (sa * sa) + b * b / (s.sigma * s.sigma)));
        if (val > image(v, u) || (val == image(v, u) && s.depth < depth(v, u))) {
          image(v, u) = val;
          depth(v, u) = s.depth;
        }
      }
    }
  }
}

}  // namespace detail

/// Deterministic per seed. Direct mode emits noisy track observations (with
/// a fraction replaced by uniformly random, flagged outliers); rendered mode
/// splats every visible point as a Gaussian blob at its jittered position.
/// Both modes emit depth maps of the blob footprints.
inline SyntheticSequence generate_sequence(const SyntheticScene& scene, SyntheticMode mode, std::uint64_t seed) {
  validate_scene(scene);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& k = scene.intrinsics;

  SyntheticSequence seq;
  seq.intrinsics = k;
  seq.mode = mode;
  seq.groundtruth = Trajectory(true);
  for (std::size_t f = 0; f < scene.poses.size(); ++f) {
    const double stamp = static_cast<double>(f) / scene.frame_rate;
    seq.groundtruth.push_back({static_cast<std::int64_t>(f), stamp, scene.poses[f], false, true, false});

    SyntheticFrame frame;
    frame.timestamp = stamp;
    std::vector<detail::Splat> exact, jittered;
    for (std::size_t p = 0; p < scene.points.size(); ++p) {
      const auto uv = observe(scene, p, scene.poses[f]);
      if (!uv) continue;
      const double z = (scene.poses[f].inverse() * scene.points[p]).z();
      Eigen::Vector2d obs = *uv;
      if (scene.pixel_noise > 0.0) obs += scene.pixel_noise * Eigen::Vector2d(noise(rng), noise(rng));
      exact.push_back({*uv, z, scene.brightness[p], scene.blob_sigma[p], scene.blob_shade[p]});
      jittered.push_back({obs, z, scene.brightness[p], scene.blob_sigma[p], scene.blob_shade[p]});
      if (mode == SyntheticMode::direct) frame.tracks.push_back({static_cast<std::int64_t>(p), obs.y(), obs.x(), false});
    }
    if (mode == SyntheticMode::direct && scene.outlier_fraction > 0.0) {
      const auto n = static_cast<std::size_t>(std::round(scene.outlier_fraction * frame.tracks.size()));
      std::vector<std::size_t> idx(frame.tracks.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(unit(rng) * static_cast<double>(idx.size() - i));
        std::swap(idx[i], idx[std::min(j, idx.size() - 1)]);
        auto& t = frame.tracks[idx[i]];
        t.x = unit(rng) * (k.height - 1);
        t.y = unit(rng) * (k.width - 1);
        t.outlier = true;
      }
    }
    Grid<double> pixels;
    detail::render_splats(mode == SyntheticMode::rendered ? jittered : exact, k, pixels, frame.depth);
    if (mode == SyntheticMode::rendered) frame.image = GrayImage(std::move(pixels));
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

/// Writes manifest.txt, gt.tum.txt, gt.kitti.txt and per-frame images/,
/// depth/ and tracks/ files under `dir`. Returns the manifest path.
inline std::filesystem::path write_sequence(const std::filesystem::path& dir, const SyntheticSequence& seq,
                                            const std::string& name = "synthetic") {
  std::filesystem::create_directories(dir / "depth");
  if (seq.mode == SyntheticMode::rendered) std::filesystem::create_directories(dir / "images");
  if (seq.mode == SyntheticMode::direct) std::filesystem::create_directories(dir / "tracks");
  SequenceManifest m;
  m.name = name;
  m.intrinsics = seq.intrinsics;
  m.groundtruth = dir / "gt.tum.txt";
  m.groundtruth_format = TrajectoryFormat::tum;
  write_trajectory_tum(dir / "gt.tum.txt", seq.groundtruth);
  write_trajectory_kitti(dir / "gt.kitti.txt", seq.groundtruth);
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    std::ostringstream stem;
    stem << std::setw(6) << std::setfill('0') << f;
    const auto& fr = seq.frames[f];
    FrameEntry e;
    e.timestamp = fr.timestamp;
    e.depth = dir / "depth" / (stem.str() + ".fmap");
    write_depth(*e.depth, fr.depth);
    if (fr.image) {
      e.image = dir / "images" / (stem.str() + ".pgm");
      write_pgm(e.image, *fr.image);
    }
    if (seq.mode == SyntheticMode::direct) {
      e.tracks = dir / "tracks" / (stem.str() + ".txt");
      write_tracks(*e.tracks, fr.tracks);
    }
    m.frames.push_back(std::move(e));
  }
  write_manifest(dir / "manifest.txt", m);
  return dir / "manifest.txt";
}

}  // namespace dinovo

#endif  // DINOVO_SYNTHETIC_HPP
