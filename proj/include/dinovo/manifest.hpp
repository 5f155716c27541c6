#ifndef DINOVO_MANIFEST_HPP
#define DINOVO_MANIFEST_HPP

// Sequence manifest text format:
//
//   [camera]
//   fx = 400
//   fy = 400
//   cx = 315
//   cy = 238
//   width = 630
//   height = 476
//   [sequence]
//   name = synth
//   groundtruth = gt.tum.txt          (optional)
//   groundtruth_format = tum          (optional: tum | kitti, default by extension)
//   body_to_camera = r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3   (optional)
//   [frames]
//   <timestamp> <image | -> [depth=<fmap>] [coarse=<fmap>] [fine=<fmap>] [tracks=<txt>]
//
// Paths are relative to the manifest's directory. '#' starts a comment line.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dinovo/error.hpp"
#include "dinovo/fmap.hpp"
#include "dinovo/geometry.hpp"
#include "dinovo/supervision.hpp"
#include "dinovo/trajectory.hpp"

namespace dinovo {

struct FrameEntry {
  double timestamp = 0.0;
  std::filesystem::path image;
  std::optional<std::filesystem::path> depth;
  std::optional<std::filesystem::path> coarse;
  std::optional<std::filesystem::path> fine;
  std::optional<std::filesystem::path> tracks;
};

struct SequenceManifest {
  std::string name;
  CameraIntrinsics intrinsics;
  std::vector<FrameEntry> frames;
  std::optional<std::filesystem::path> groundtruth;
  TrajectoryFormat groundtruth_format = TrajectoryFormat::kitti;
  std::optional<Pose> body_to_camera;

  std::size_t size() const { return frames.size(); }

  void validate() const {
    intrinsics.validate();
    if (frames.empty()) throw FormatError("manifest: no frames");
    auto all_or_none = [&](auto member, const char* what) {
      std::size_t n = 0;
      for (const auto& f : frames) n += (f.*member).has_value() ? 1 : 0;
      if (n != 0 && n != frames.size()) throw FormatError(std::string("manifest: '") + what + "' given for some frames only");
    };
    all_or_none(&FrameEntry::depth, "depth");
    all_or_none(&FrameEntry::coarse, "coarse");
    all_or_none(&FrameEntry::fine, "fine");
    all_or_none(&FrameEntry::tracks, "tracks");
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (frames[i].timestamp < frames[i - 1].timestamp) throw FormatError("manifest: timestamps must be nondecreasing");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw FormatError(what + ": bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError(what + ": bad number '" + s + "'");
  }
}

inline Pose parse_pose12(const std::string& s, const std::string& what) {
  const auto v = parse_reals(s, 12, what);
  Eigen::Matrix3d r;
  r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
  return Pose(Rotation::from_matrix(r, 1e-6), Eigen::Vector3d(v[3], v[7], v[11]));
}

}  // namespace detail

inline SequenceManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("manifest: cannot open " + path.string());
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return base / p; };

  SequenceManifest m;
  std::map<std::string, double> camera;
  std::string section, line;
  int line_no = 0;
  bool explicit_format = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError(where + ": malformed section header");
      section = line.substr(1, line.size() - 2);
      if (section != "camera" && section != "sequence" && section != "frames") {
        throw FormatError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    if (section == "frames") {
      std::istringstream ls(line);
      std::string stamp, image, opt;
      ls >> stamp >> image;
      if (image.empty()) throw FormatError(where + ": frame line needs a timestamp and an image path");
      FrameEntry f;
      f.timestamp = detail::parse_real(stamp, where);
      if (image != "-") f.image = resolve(image);
      while (ls >> opt) {
        const auto eq = opt.find('=');
        if (eq == std::string::npos) throw FormatError(where + ": expected key=path, got '" + opt + "'");
        const std::string key = opt.substr(0, eq), val = opt.substr(eq + 1);
        if (key == "depth") f.depth = resolve(val);
        else if (key == "coarse") f.coarse = resolve(val);
        else if (key == "fine") f.fine = resolve(val);
        else if (key == "tracks") f.tracks = resolve(val);
        else throw FormatError(where + ": unknown frame field '" + key + "'");
      }
      m.frames.push_back(std::move(f));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq)), val = detail::trim(line.substr(eq + 1));
    if (section == "camera") {
      if (key != "fx" && key != "fy" && key != "cx" && key != "cy" && key != "width" && key != "height") {
        throw FormatError(where + ": unknown camera key '" + key + "'");
      }
      camera[key] = detail::parse_real(val, where);
    } else if (section == "sequence") {
      if (key == "name") m.name = val;
      else if (key == "groundtruth") m.groundtruth = resolve(val);
      else if (key == "groundtruth_format") {
        explicit_format = true;
        if (val == "tum") m.groundtruth_format = TrajectoryFormat::tum;
        else if (val == "kitti") m.groundtruth_format = TrajectoryFormat::kitti;
        else throw FormatError(where + ": groundtruth_format must be tum or kitti");
      } else if (key == "body_to_camera") m.body_to_camera = detail::parse_pose12(val, where);
      else throw FormatError(where + ": unknown sequence key '" + key + "'");
    } else {
      throw FormatError(where + ": key outside of a section");
    }
  }
  for (const char* k : {"fx", "fy", "cx", "cy", "width", "height"}) {
    if (!camera.count(k)) throw FormatError("manifest: camera is missing '" + std::string(k) + "'");
  }
  m.intrinsics = {camera["fx"], camera["fy"], camera["cx"], camera["cy"], static_cast<int>(camera["width"]),
                  static_cast<int>(camera["height"])};
  if (m.groundtruth && !explicit_format) m.groundtruth_format = format_from_extension(*m.groundtruth);
  m.validate();
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const SequenceManifest& m) {
  m.validate();
  std::ofstream out(path);
  if (!out) throw FormatError("manifest: cannot write " + path.string());
  const std::filesystem::path base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    if (p.empty()) return std::string("-");
    return base.empty() ? p.generic_string() : p.lexically_relative(base).generic_string();
  };
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "[camera]\nfx = " << m.intrinsics.fx << "\nfy = " << m.intrinsics.fy << "\ncx = " << m.intrinsics.cx
      << "\ncy = " << m.intrinsics.cy << "\nwidth = " << m.intrinsics.width << "\nheight = " << m.intrinsics.height
      << "\n[sequence]\n";
  if (!m.name.empty()) out << "name = " << m.name << '\n';
  if (m.groundtruth) {
    out << "groundtruth = " << rel(*m.groundtruth) << '\n';
    out << "groundtruth_format = " << (m.groundtruth_format == TrajectoryFormat::tum ? "tum" : "kitti") << '\n';
  }
  if (m.body_to_camera) {
    const Eigen::Matrix4d t = m.body_to_camera->matrix();
    out << "body_to_camera =";
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) out << ' ' << t(r, c);
    }
    out << '\n';
  }
  out << "[frames]\n";
  for (const auto& f : m.frames) {
    out << f.timestamp << ' ' << rel(f.image);
    if (f.depth) out << " depth=" << rel(*f.depth);
    if (f.coarse) out << " coarse=" << rel(*f.coarse);
    if (f.fine) out << " fine=" << rel(*f.fine);
    if (f.tracks) out << " tracks=" << rel(*f.tracks);
    out << '\n';
  }
  if (!out) throw FormatError("manifest: write failed for " + path.string());
}

/// Camera-to-world ground-truth pose for every manifest frame, or empty when
/// the manifest has no ground truth. KITTI files are matched by line index;
/// TUM files by nearest timestamp within `max_dt` seconds. A body-frame
/// trajectory is mapped to the camera with `body_to_camera`.
inline std::vector<std::optional<Pose>> groundtruth_poses(const SequenceManifest& m, double max_dt = 0.02) {
  std::vector<std::optional<Pose>> out(m.size());
  if (!m.groundtruth) return out;
  const Trajectory gt = load_trajectory(*m.groundtruth, m.groundtruth_format);
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::optional<Pose> p;
    if (m.groundtruth_format == TrajectoryFormat::kitti) {
      if (i < gt.size()) p = gt[i].pose;
    } else {
      const auto it = std::lower_bound(gt.begin(), gt.end(), m.frames[i].timestamp,
                                       [](const TrajectoryEntry& e, double t) { return e.timestamp < t; });
      double best = max_dt;
      for (auto c : {it, it == gt.begin() ? it : std::prev(it)}) {
        if (c == gt.end()) continue;
        const double dt = std::abs(c->timestamp - m.frames[i].timestamp);
        if (dt <= best) {
          best = dt;
          p = c->pose;
        }
      }
    }
    if (p && m.body_to_camera) p = *p * *m.body_to_camera;
    out[i] = p;
  }
  return out;
}

/// Depth map stored as a single-channel FMAP, meters.
inline DepthMap read_depth(const std::filesystem::path& path) {
  const Tensor3f t = read_fmap(path);
  if (t.channels != 1) throw FormatError("depth: expected a single-channel FMAP in " + path.string());
  DepthMap d(static_cast<int>(t.rows), static_cast<int>(t.cols));
  for (std::uint32_t r = 0; r < t.rows; ++r) {
    for (std::uint32_t c = 0; c < t.cols; ++c) d(static_cast<int>(r), static_cast<int>(c)) = t.at(r, c);
  }
  return d;
}

inline void write_depth(const std::filesystem::path& path, const DepthMap& d) {
  Tensor3f t{static_cast<std::uint32_t>(d.rows()), static_cast<std::uint32_t>(d.cols()), 1, {}};
  t.values.reserve(d.size());
  for (double v : d.values()) t.values.push_back(static_cast<float>(v));
  write_fmap(path, t);
}

/// One observation of a tracked scene point; (x, y) = (row, column).
struct TrackObservation {
  std::int64_t track_id = 0;
  double x = 0.0;
  double y = 0.0;
  bool outlier = false;
};

/// Track file lines: "track_id x y outlier" with outlier in {0, 1}.
inline std::vector<TrackObservation> read_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("tracks: cannot open " + path.string());
  std::vector<TrackObservation> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank_or_comment(line)) continue;
    const auto v = detail::parse_reals(line, 4, path.filename().string() + ":" + std::to_string(line_no));
    if (v[0] != std::floor(v[0]) || (v[3] != 0.0 && v[3] != 1.0)) {
      throw FormatError("tracks: integer id and 0/1 outlier flag expected at line " + std::to_string(line_no));
    }
    out.push_back({static_cast<std::int64_t>(v[0]), v[1], v[2], v[3] == 1.0});
  }
  return out;
}

inline void write_tracks(const std::filesystem::path& path, const std::vector<TrackObservation>& obs) {
  std::ofstream out(path);
  if (!out) throw FormatError("tracks: cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& o : obs) out << o.track_id << ' ' << o.x << ' ' << o.y << ' ' << (o.outlier ? 1 : 0) << '\n';
  if (!out) throw FormatError("tracks: write failed for " + path.string());
}

}  // namespace dinovo

#endif  // DINOVO_MANIFEST_HPP
