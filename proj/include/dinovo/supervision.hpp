#ifndef DINOVO_SUPERVISION_HPP
#define DINOVO_SUPERVISION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "dinovo/detector.hpp"
#include "dinovo/error.hpp"
#include "dinovo/geometry.hpp"
#include "dinovo/grid.hpp"
#include "dinovo/matcher.hpp"

namespace dinovo {

/// Per-pixel metric depth; non-finite or non-positive entries mean "unknown".
using DepthMap = Grid<double>;

/// Ground-truth assignment labels between two keypoint sets.
struct MatchLabels {
  std::vector<std::pair<int, int>> matches;
  std::vector<int> unmatchable_a;
  std::vector<int> unmatchable_b;
};

/// Depth at the keypoint's pixel, if defined.
inline std::optional<double> depth_at(const DepthMap& depth, const Keypoint& k) {
  const int r = static_cast<int>(std::floor(k.x)), c = static_cast<int>(std::floor(k.y));
  if (r < 0 || c < 0 || r >= depth.rows() || c >= depth.cols()) return std::nullopt;
  const double d = depth(r, c);
  if (!std::isfinite(d) || d <= 0.0) return std::nullopt;
  return d;
}

/// Unprojects keypoint `k` with `depth` and maps it through `pose_b_from_a`
/// into pixel coordinates of the second view. Empty if depth is undefined or
/// the point lands behind the second camera.
inline std::optional<Eigen::Vector2d> reproject(const Keypoint& k, const DepthMap& depth, const Pose& pose_b_from_a,
                                                const CameraIntrinsics& intrinsics) {
  const auto d = depth_at(depth, k);
  if (!d) return std::nullopt;
  const Eigen::Vector2d xy = intrinsics.normalize(k.pixel());
  const Eigen::Vector3d pb = pose_b_from_a * (*d * Eigen::Vector3d(xy.x(), xy.y(), 1.0));
  if (!(pb.z() > 0.0)) return std::nullopt;
  return project(pb, intrinsics);
}

/// Labels keypoint i of view a as matched to the nearest keypoint j of view b
/// within `reproj_tol` pixels of its reprojection. Each side is labeled at
/// most once: when several i claim the same j, the closest wins and the others
/// are ignored. Keypoints without depth are ignored. A keypoint of view a
/// reprojecting out of frame or far from every keypoint is unmatchable; a
/// keypoint of view b is unmatchable if no reprojection lands within tolerance.
inline MatchLabels gt_correspondences(const KeypointSet& kp_a, const DepthMap& depth_a, const Pose& pose_b_from_a,
                                      const CameraIntrinsics& intrinsics, const KeypointSet& kp_b,
                                      double reproj_tol = 3.0) {
  if (depth_a.rows() != kp_a.image_rows || depth_a.cols() != kp_a.image_cols) {
    throw InvalidArgument("gt_correspondences: depth map size differs from image size");
  }
  MatchLabels labels;
  const int nb = static_cast<int>(kp_b.size());
  std::vector<int> claim(nb, -1);
  std::vector<double> claim_dist(nb, std::numeric_limits<double>::infinity());
  std::vector<bool> b_near(nb, false);
  std::vector<int> nearest(kp_a.size(), -2);  // -2 ignored, -1 unmatchable, else j

  for (std::size_t i = 0; i < kp_a.size(); ++i) {
    if (!depth_at(depth_a, kp_a[i])) continue;
    const auto proj = reproject(kp_a[i], depth_a, pose_b_from_a, intrinsics);
    if (!proj || !intrinsics.contains(*proj)) {
      nearest[i] = -1;
      continue;
    }
    int best = -1;
    double best_d = reproj_tol;
    for (int j = 0; j < nb; ++j) {
      const double d = (*proj - kp_b[j].pixel()).norm();
      if (d <= reproj_tol) b_near[j] = true;
      if (d <= best_d) {
        if (best < 0 || d < best_d) {
          best = j;
          best_d = d;
        }
      }
    }
    nearest[i] = best;
    if (best >= 0 && best_d < claim_dist[best]) {
      claim[best] = static_cast<int>(i);
      claim_dist[best] = best_d;
    }
  }
  for (std::size_t i = 0; i < kp_a.size(); ++i) {
    if (nearest[i] == -1) {
      labels.unmatchable_a.push_back(static_cast<int>(i));
    } else if (nearest[i] >= 0 && claim[nearest[i]] == static_cast<int>(i)) {
      labels.matches.emplace_back(static_cast<int>(i), nearest[i]);
    }
  }
  for (int j = 0; j < nb; ++j) {
    if (!b_near[j]) labels.unmatchable_b.push_back(j);
  }
  return labels;
}

/// Negative log-likelihood of the assignment at each layer, averaged over
/// layers: -(mean log P over matches + 1/2 mean log(1 - sigma) over each
/// unmatchable set). Probabilities are clamped at 1e-12.
inline double match_loss(const std::vector<AssignmentMatrix>& per_layer, const MatchLabels& labels) {
  if (per_layer.empty()) throw InvalidArgument("match_loss: need at least one layer");
  if (labels.matches.empty() && labels.unmatchable_a.empty() && labels.unmatchable_b.empty()) {
    throw InvalidArgument("match_loss: no labels, objective undefined");
  }
  auto safe_log = [](double p) { return std::log(std::max(p, 1e-12)); };
  double total = 0.0;
  for (const auto& p : per_layer) {
    double layer = 0.0;
    if (!labels.matches.empty()) {
      double s = 0.0;
      for (const auto& [i, j] : labels.matches) s += safe_log(p.probabilities(i, j));
      layer += s / static_cast<double>(labels.matches.size());
    }
    if (!labels.unmatchable_a.empty()) {
      double s = 0.0;
      for (int i : labels.unmatchable_a) s += safe_log(1.0 - p.matchability_a(i));
      layer += 0.5 * s / static_cast<double>(labels.unmatchable_a.size());
    }
    if (!labels.unmatchable_b.empty()) {
      double s = 0.0;
      for (int j : labels.unmatchable_b) s += safe_log(1.0 - p.matchability_b(j));
      layer += 0.5 * s / static_cast<double>(labels.unmatchable_b.size());
    }
    total -= layer;
  }
  return total / static_cast<double>(per_layer.size());
}

struct LossConfig {
  double lambda_t = 400.0;
  double lambda_r = 180.0;
  double lambda_p = 0.0;
  double epsilon = 1e-6;
  bool geodesic_rotation = false;  ///< ||Log(R_hat^T R)|| instead of ||Log(R_hat) - Log(R)||

  void validate() const {
    if (!(lambda_t >= 0.0) || !(lambda_r >= 0.0)) throw InvalidArgument("loss: weights must be >= 0");
    if (!(lambda_p >= 0.0 && lambda_p <= 1.0)) throw InvalidArgument("loss: lambda_p must lie in [0, 1]");
    if (!(epsilon > 0.0)) throw InvalidArgument("loss: epsilon must be positive");
  }
};

/// Up-to-scale pose objective: lambda_t times the distance between unit
/// translation directions plus lambda_r times the rotation discrepancy.
inline double pose_loss(const Pose& pred, const Pose& gt, const LossConfig& cfg = {}) {
  cfg.validate();
  const Eigen::Vector3d tp = pred.translation() / std::max(pred.translation().norm(), cfg.epsilon);
  const Eigen::Vector3d tg = gt.translation() / std::max(gt.translation().norm(), cfg.epsilon);
  const double rot = cfg.geodesic_rotation
                         ? log_rotation(pred.rotation().inverse() * gt.rotation()).omega.norm()
                         : (log_rotation(pred.rotation()).omega - log_rotation(gt.rotation()).omega).norm();
  return cfg.lambda_t * (tp - tg).norm() + cfg.lambda_r * rot;
}

/// (1 - lambda_p) L_m + lambda_p L_p.
inline double total_loss(double match, double pose, double lambda_p) {
  if (!(lambda_p >= 0.0 && lambda_p <= 1.0)) throw InvalidArgument("total_loss: lambda_p must lie in [0, 1]");
  if (lambda_p == 0.0) return match;
  if (lambda_p == 1.0) return pose;
  return (1.0 - lambda_p) * match + lambda_p * pose;
}

}  // namespace dinovo

#endif  // DINOVO_SUPERVISION_HPP
