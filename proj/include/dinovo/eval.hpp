#ifndef DINOVO_EVAL_HPP
#define DINOVO_EVAL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dinovo/error.hpp"
#include "dinovo/geometry.hpp"
#include "dinovo/matcher.hpp"
#include "dinovo/supervision.hpp"
#include "dinovo/trajectory.hpp"

namespace dinovo {

/// Index pairs (est, gt). Nearest timestamp within `max_dt` seconds when both
/// trajectories carry timestamps, otherwise equal frame ids.
inline std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                                  double max_dt = 0.02) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (est.has_timestamps() && gt.has_timestamps()) {
    for (std::size_t i = 0; i < est.size(); ++i) {
      const double t = est[i].timestamp;
      const auto it = std::lower_bound(gt.begin(), gt.end(), t,
                                       [](const TrajectoryEntry& e, double s) { return e.timestamp < s; });
      std::size_t best = gt.size();
      double best_dt = max_dt;
      for (auto c : {it, it == gt.begin() ? it : std::prev(it)}) {
        if (c == gt.end()) continue;
        const double dt = std::abs(c->timestamp - t);
        if (dt <= best_dt) {
          best_dt = dt;
          best = static_cast<std::size_t>(c - gt.begin());
        }
      }
      if (best < gt.size()) out.emplace_back(i, best);
    }
  } else {
    for (std::size_t i = 0; i < est.size(); ++i) {
      const auto j = gt.find(est[i].frame_id);
      if (j >= 0) out.emplace_back(i, static_cast<std::size_t>(j));
    }
  }
  return out;
}

enum class AlignmentMode { se3, sim3 };

inline const char* to_string(AlignmentMode m) { return m == AlignmentMode::se3 ? "SE3" : "Sim3"; }

struct AteReport {
  double rmse = 0.0;
  AlignmentMode mode = AlignmentMode::se3;
  std::size_t pairs = 0;
  Pose alignment;  ///< maps estimated positions onto ground truth
};

/// Least-squares alignment of estimated camera centres to ground truth
/// (with scale in Sim3 mode), then the RMSE of the position residuals.
inline AteReport ate_report(const Trajectory& est, const Trajectory& gt, AlignmentMode mode) {
  const auto pairs = associate(est, gt);
  if (pairs.size() < 2) throw InvalidArgument("ate: fewer than 2 associated poses");
  Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(pairs.size())), dst(3, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    src.col(static_cast<Eigen::Index>(n)) = est[pairs[n].first].pose.translation();
    dst.col(static_cast<Eigen::Index>(n)) = gt[pairs[n].second].pose.translation();
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, mode == AlignmentMode::sim3);
  const Eigen::Matrix3d sr = t.topLeftCorner<3, 3>();
  const double scale = mode == AlignmentMode::sim3 ? std::cbrt(sr.determinant()) : 1.0;
  const Eigen::Matrix3Xd aligned = (sr * src).colwise() + t.topRightCorner<3, 1>();
  AteReport r;
  r.mode = mode;
  r.pairs = pairs.size();
  r.rmse = std::sqrt((aligned - dst).colwise().squaredNorm().mean());
  r.alignment = Pose(Rotation::nearest(sr / scale), t.topRightCorner<3, 1>(), scale);
  // The identity is a feasible alignment too; keeping it when it is no worse
  // makes identical trajectories score exactly zero instead of rounding noise.
  const double unaligned = std::sqrt((src - dst).colwise().squaredNorm().mean());
  if (unaligned <= r.rmse) {
    r.rmse = unaligned;
    r.alignment = Pose();
  }
  return r;
}

inline double ate(const Trajectory& est, const Trajectory& gt, AlignmentMode mode) {
  return ate_report(est, gt, mode).rmse;
}

inline constexpr std::array<double, 8> kDriftLengths{100, 200, 300, 400, 500, 600, 700, 800};

struct DriftReport {
  double t_rel = 0.0;  ///< percent
  double r_rel = 0.0;  ///< degrees per 100 m
  std::array<double, 8> t_rel_by_length{};
  std::array<double, 8> r_rel_by_length{};
  std::array<std::size_t, 8> segments_by_length{};
  std::size_t segments = 0;
  bool empty = true;  ///< no segment of 100 m or more was available
};

/// KITTI odometry drift: segments start every `step` frames, for each length
/// L the segment ends at the first frame whose ground-truth path distance
/// exceeds the start's by L. Errors are averaged over all segments.
inline DriftReport kitti_drift(const Trajectory& est, const Trajectory& gt, std::size_t step = 10) {
  const auto pairs = associate(est, gt);
  std::vector<Eigen::Matrix4d> pe, pg;
  for (const auto& [i, j] : pairs) {
    pe.push_back(est[i].pose.matrix());
    pg.push_back(gt[j].pose.matrix());
  }
  std::vector<double> dist(pg.size(), 0.0);
  for (std::size_t i = 1; i < pg.size(); ++i) {
    dist[i] = dist[i - 1] + (pg[i].topRightCorner<3, 1>() - pg[i - 1].topRightCorner<3, 1>()).norm();
  }
  DriftReport r;
  std::array<double, 8> t_sum{}, r_sum{};
  double t_total = 0.0, r_total = 0.0;
  for (std::size_t first = 0; first < pg.size(); first += step) {
    for (std::size_t l = 0; l < kDriftLengths.size(); ++l) {
      const double len = kDriftLengths[l];
      std::size_t last = first;
      while (last < dist.size() && !(dist[last] > dist[first] + len)) ++last;
      if (last >= dist.size()) continue;
      const Eigen::Matrix4d dg = pg[first].inverse() * pg[last];
      const Eigen::Matrix4d de = pe[first].inverse() * pe[last];
      // err = de^-1 dg has translation Re^T (tg - te), whose norm is |tg - te|,
      // and rotation angle 2 asin(|Re - Rg|_F / (2 sqrt 2)). Both forms are
      // exact for identical segments, unlike acos of the trace.
      const double t_err = (dg.topRightCorner<3, 1>() - de.topRightCorner<3, 1>()).norm();
      const double chord = (de.topLeftCorner<3, 3>() - dg.topLeftCorner<3, 3>()).norm() / (2.0 * std::numbers::sqrt2);
      const double r_err = 2.0 * std::asin(std::min(1.0, chord));
      t_sum[l] += t_err / len;
      r_sum[l] += r_err / len;
      t_total += t_err / len;
      r_total += r_err / len;
      ++r.segments_by_length[l];
      ++r.segments;
    }
  }
  constexpr double deg = 180.0 / std::numbers::pi;
  for (std::size_t l = 0; l < kDriftLengths.size(); ++l) {
    if (r.segments_by_length[l] == 0) continue;
    const auto n = static_cast<double>(r.segments_by_length[l]);
    r.t_rel_by_length[l] = 100.0 * t_sum[l] / n;
    r.r_rel_by_length[l] = 100.0 * deg * r_sum[l] / n;
  }
  if (r.segments > 0) {
    r.empty = false;
    r.t_rel = 100.0 * t_total / static_cast<double>(r.segments);
    r.r_rel = 100.0 * deg * r_total / static_cast<double>(r.segments);
  }
  return r;
}

inline constexpr std::array<double, 4> kMmaThresholds{1.0, 3.0, 5.0, 10.0};

struct MatchingMetrics {
  std::array<double, 4> mma{};  ///< at 1, 3, 5, 10 px
  double recall = 0.0;          ///< correct at 5 px from matchable first keypoints, over ground-truth matches
  std::size_t predicted = 0;
  std::size_t groundtruth = 0;
  bool empty_prediction = false;  ///< MMA reported as 0
};

/// A predicted match is correct at tau when the depth-based reprojection of
/// its first keypoint lies within tau pixels of its second keypoint. Matches
/// whose first keypoint has no depth count as incorrect.
inline MatchingMetrics matching_metrics(const MatchSet& pred, const MatchLabels& labels, const DepthMap& depth_a,
                                        const Pose& pose_b_from_a, const CameraIntrinsics& intrinsics) {
  if (depth_a.empty()) throw InvalidArgument("matching_metrics: depth map required");
  if (depth_a.rows() != pred.keypoints_a.image_rows || depth_a.cols() != pred.keypoints_a.image_cols) {
    throw InvalidArgument("matching_metrics: depth map size differs from image size");
  }
  MatchingMetrics m;
  m.predicted = pred.size();
  m.groundtruth = labels.matches.size();
  if (pred.empty()) {
    m.empty_prediction = true;
    return m;
  }
  std::vector<bool> matchable(pred.keypoints_a.size(), false);
  for (const auto& [i, j] : labels.matches) {
    if (i >= 0 && static_cast<std::size_t>(i) < matchable.size()) matchable[static_cast<std::size_t>(i)] = true;
  }
  std::array<std::size_t, 4> correct{};
  std::size_t recalled = 0;
  for (const auto& mt : pred.matches) {
    const auto proj = reproject(pred.keypoints_a[mt.first], depth_a, pose_b_from_a, intrinsics);
    if (!proj) continue;
    const double err = (*proj - pred.keypoints_b[mt.second].pixel()).norm();
    for (std::size_t t = 0; t < kMmaThresholds.size(); ++t) correct[t] += err <= kMmaThresholds[t] ? 1 : 0;
    if (err <= kMmaThresholds[2] && matchable[static_cast<std::size_t>(mt.first)]) ++recalled;
  }
  for (std::size_t t = 0; t < kMmaThresholds.size(); ++t) {
    m.mma[t] = static_cast<double>(correct[t]) / static_cast<double>(pred.size());
  }
  if (m.groundtruth > 0) m.recall = static_cast<double>(recalled) / static_cast<double>(m.groundtruth);
  return m;
}

/// A named metric value for report output.
struct MetricRow {
  std::string metric;
  std::string sequence;
  double value = 0.0;
};

inline std::vector<MetricRow> metric_rows(const AteReport& r, const std::string& sequence) {
  return {{std::string("ate_") + (r.mode == AlignmentMode::se3 ? "se3" : "sim3") + "_m", sequence, r.rmse}};
}

inline std::vector<MetricRow> metric_rows(const DriftReport& r, const std::string& sequence) {
  std::vector<MetricRow> rows{{"t_rel_pct", sequence, r.t_rel}, {"r_rel_deg_per_100m", sequence, r.r_rel}};
  for (std::size_t l = 0; l < kDriftLengths.size(); ++l) {
    const std::string len = std::to_string(static_cast<int>(kDriftLengths[l]));
    rows.push_back({"t_rel_pct@" + len + "m", sequence, r.t_rel_by_length[l]});
    rows.push_back({"r_rel_deg_per_100m@" + len + "m", sequence, r.r_rel_by_length[l]});
  }
  return rows;
}

inline std::vector<MetricRow> metric_rows(const MatchingMetrics& m, const std::string& sequence) {
  std::vector<MetricRow> rows;
  for (std::size_t t = 0; t < kMmaThresholds.size(); ++t) {
    rows.push_back({"mma@" + std::to_string(static_cast<int>(kMmaThresholds[t])) + "px", sequence, m.mma[t]});
  }
  rows.push_back({"recall@5px", sequence, m.recall});
  return rows;
}

/// "metric,sequence,value" with a header line.
inline void write_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "metric,sequence,value\n" << std::setprecision(10);
  for (const auto& r : rows) out << r.metric << ',' << r.sequence << ',' << r.value << '\n';
}

/// Left-aligned text table with fixed 6-decimal values.
inline void write_table(std::ostream& out, const std::vector<MetricRow>& rows) {
  std::size_t wm = 6, ws = 8;
  for (const auto& r : rows) {
    wm = std::max(wm, r.metric.size());
    ws = std::max(ws, r.sequence.size());
  }
  out << std::left << std::setw(static_cast<int>(wm)) << "metric" << "  " << std::setw(static_cast<int>(ws))
      << "sequence" << "  value\n";
  for (const auto& r : rows) {
    std::ostringstream v;
    v << std::fixed << std::setprecision(6) << r.value;
    out << std::left << std::setw(static_cast<int>(wm)) << r.metric << "  " << std::setw(static_cast<int>(ws))
        << r.sequence << "  " << v.str() << '\n';
  }
}

}  // namespace dinovo

#endif  // DINOVO_EVAL_HPP
