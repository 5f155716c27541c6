#ifndef DINOVO_TRAJECTORY_HPP
#define DINOVO_TRAJECTORY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dinovo/error.hpp"
#include "dinovo/geometry.hpp"

namespace dinovo {

struct TrajectoryEntry {
  std::int64_t frame_id = 0;
  double timestamp = 0.0;
  Pose pose;  ///< camera-to-world
  bool keyframe = false;
  bool tracked = true;
  bool repaired = false;  ///< rotation was re-orthonormalized on load
};

/// Ordered camera-to-world poses with strictly increasing frame ids.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(bool has_timestamps) : has_timestamps_(has_timestamps) {}

  void push_back(TrajectoryEntry e) {
    if (!entries_.empty() && e.frame_id <= entries_.back().frame_id) {
      throw InvalidArgument("trajectory: frame ids must be strictly increasing");
    }
    entries_.push_back(std::move(e));
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const TrajectoryEntry& operator[](std::size_t i) const { return entries_[i]; }
  const TrajectoryEntry& back() const { return entries_.back(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// True when timestamps carry real time (TUM files, sequence manifests).
  bool has_timestamps() const { return has_timestamps_; }
  void set_has_timestamps(bool v) { has_timestamps_ = v; }

  std::size_t keyframe_count() const {
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.keyframe; }));
  }

  /// Index of the entry with `frame_id`, or -1.
  std::ptrdiff_t find(std::int64_t frame_id) const {
    const auto it = std::lower_bound(entries_.begin(), entries_.end(), frame_id,
                                     [](const TrajectoryEntry& e, std::int64_t id) { return e.frame_id < id; });
    return it != entries_.end() && it->frame_id == frame_id ? it - entries_.begin() : -1;
  }

 private:
  std::vector<TrajectoryEntry> entries_;
  bool has_timestamps_ = false;
};

enum class TrajectoryFormat { kitti, tum };

/// `.tum.txt` / `.tum` -> TUM, anything else -> KITTI.
inline TrajectoryFormat format_from_extension(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  auto ends_with = [&](const std::string& s) { return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0; };
  return ends_with(".tum.txt") || ends_with(".tum") ? TrajectoryFormat::tum : TrajectoryFormat::kitti;
}

namespace detail {

inline std::vector<double> parse_reals(const std::string& line, std::size_t expected, const std::string& what) {
  std::istringstream ls(line);
  std::vector<double> v;
  std::string tok;
  while (ls >> tok) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw FormatError(what + ": bad number '" + tok + "'");
    } catch (const std::logic_error&) {
      throw FormatError(what + ": bad number '" + tok + "'");
    }
    if (!std::isfinite(v.back())) throw FormatError(what + ": non-finite value");
  }
  if (v.size() != expected) {
    throw FormatError(what + ": expected " + std::to_string(expected) + " fields, got " + std::to_string(v.size()));
  }
  return v;
}

inline bool blank_or_comment(const std::string& line) {
  const auto p = line.find_first_not_of(" \t\r");
  return p == std::string::npos || line[p] == '#';
}

}  // namespace detail

/// KITTI odometry poses: 12 reals per line, row-major 3x4 [R | t]. Frame ids
/// are line indices times `stride`. Rotations off SO(3) by more than 1e-6
/// are re-orthonormalized and flagged.
inline Trajectory load_trajectory_kitti(const std::filesystem::path& path, std::int64_t stride = 1) {
  std::ifstream in(path);
  if (!in) throw FormatError("kitti: cannot open " + path.string());
  Trajectory traj(false);
  std::string line;
  std::int64_t index = 0;
  while (std::getline(in, line)) {
    if (detail::blank_or_comment(line)) continue;
    const auto v = detail::parse_reals(line, 12, "kitti line " + std::to_string(index + 1));
    Eigen::Matrix3d r;
    r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    const double drift = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    TrajectoryEntry e;
    e.frame_id = index * stride;
    e.timestamp = static_cast<double>(e.frame_id);
    e.pose = Pose(Rotation::nearest(r), Eigen::Vector3d(v[3], v[7], v[11]));
    e.repaired = drift > 1e-6;
    traj.push_back(std::move(e));
    ++index;
  }
  return traj;
}

inline void write_trajectory_kitti(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw FormatError("kitti: cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& e : traj) {
    const Eigen::Matrix4d m = e.pose.matrix();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) out << m(r, c) << ((r == 2 && c == 3) ? '\n' : ' ');
    }
  }
  if (!out) throw FormatError("kitti: write failed for " + path.string());
}

/// TUM poses: "timestamp tx ty tz qx qy qz qw". Quaternions must have unit
/// norm within 1e-6.
inline Trajectory load_trajectory_tum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("tum: cannot open " + path.string());
  Trajectory traj(true);
  std::string line;
  std::int64_t index = 0;
  double last_stamp = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    if (detail::blank_or_comment(line)) continue;
    const auto v = detail::parse_reals(line, 8, "tum line " + std::to_string(index + 1));
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-6) throw FormatError("tum: quaternion is not unit norm");
    if (v[0] < last_stamp) throw FormatError("tum: timestamps must be nondecreasing");
    last_stamp = v[0];
    TrajectoryEntry e;
    e.frame_id = index++;
    e.timestamp = v[0];
    e.pose = Pose(Rotation::from_quaternion(q), Eigen::Vector3d(v[1], v[2], v[3]));
    traj.push_back(std::move(e));
  }
  return traj;
}

inline void write_trajectory_tum(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw FormatError("tum: cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& e : traj) {
    const Eigen::Quaterniond q = e.pose.rotation().quaternion();
    const Eigen::Vector3d& t = e.pose.translation();
    out << e.timestamp << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' '
        << q.z() << ' ' << q.w() << '\n';
  }
  if (!out) throw FormatError("tum: write failed for " + path.string());
}

inline Trajectory load_trajectory(const std::filesystem::path& path, TrajectoryFormat format,
                                  std::int64_t kitti_stride = 1) {
  return format == TrajectoryFormat::tum ? load_trajectory_tum(path) : load_trajectory_kitti(path, kitti_stride);
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
  return load_trajectory(path, format_from_extension(path));
}

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj, TrajectoryFormat format) {
  if (format == TrajectoryFormat::tum) {
    write_trajectory_tum(path, traj);
  } else {
    write_trajectory_kitti(path, traj);
  }
}

}  // namespace dinovo

#endif  // DINOVO_TRAJECTORY_HPP
