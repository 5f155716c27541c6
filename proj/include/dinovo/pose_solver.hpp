#ifndef DINOVO_POSE_SOLVER_HPP
#define DINOVO_POSE_SOLVER_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "dinovo/error.hpp"
#include "dinovo/geometry.hpp"
#include "dinovo/matcher.hpp"

namespace dinovo {

/// Weighted calibrated correspondences x_i (first view) <-> x_j (second view).
struct CorrespondenceSet {
  std::vector<Eigen::Vector2d> first;
  std::vector<Eigen::Vector2d> second;
  Eigen::VectorXd weights;

  std::size_t size() const { return first.size(); }

  void validate() const {
    if (first.size() != second.size() || weights.size() != static_cast<Eigen::Index>(first.size())) {
      throw InvalidArgument("correspondences: inconsistent sizes");
    }
    if (first.size() < 8) throw InvalidArgument("correspondences: at least 8 pairs required");
    if (!weights.allFinite() || (weights.array() < 0.0).any()) {
      throw InvalidArgument("correspondences: weights must be finite and non-negative");
    }
    if ((weights.array() > 0.0).count() < 8) {
      throw InvalidArgument("correspondences: at least 8 strictly positive weights required");
    }
  }
};

/// Calibrated coordinates of a match set; weights are the match confidences.
inline CorrespondenceSet make_correspondences(const MatchSet& m, const CameraIntrinsics& k) {
  CorrespondenceSet c;
  c.weights.resize(static_cast<Eigen::Index>(m.size()));
  for (std::size_t n = 0; n < m.size(); ++n) {
    const auto& mt = m.matches[n];
    c.first.push_back(k.normalize(m.keypoints_a[mt.first].pixel()));
    c.second.push_back(k.normalize(m.keypoints_b[mt.second].pixel()));
    c.weights(static_cast<Eigen::Index>(n)) = mt.confidence;
  }
  return c;
}

using EpipolarRow = Eigen::Matrix<double, 1, 9>;

/// Row r with r . flat(E) = x_j^T E x_i for row-major flat(E) = (e11 .. e33).
inline EpipolarRow epipolar_row(const Eigen::Vector2d& xi, const Eigen::Vector2d& xj) {
  EpipolarRow r;
  r << xj.x() * xi.x(), xj.x() * xi.y(), xj.x(), xj.y() * xi.x(), xj.y() * xi.y(), xj.y(), xi.x(), xi.y(), 1.0;
  return r;
}

inline Eigen::Matrix<double, 9, 1> flatten(const Eigen::Matrix3d& e) {
  Eigen::Matrix<double, 9, 1> f;
  f << e(0, 0), e(0, 1), e(0, 2), e(1, 0), e(1, 1), e(1, 2), e(2, 0), e(2, 1), e(2, 2);
  return f;
}

inline Eigen::Matrix3d unflatten(const Eigen::Matrix<double, 9, 1>& f) {
  Eigen::Matrix3d e;
  e << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  return e;
}

struct DesignMatrix {
  Eigen::MatrixXd phi;       ///< N x 9
  Eigen::MatrixXd weighted;  ///< diag(w) * phi
};

inline DesignMatrix build_design_matrix(const CorrespondenceSet& c) {
  c.validate();
  DesignMatrix d{Eigen::MatrixXd(static_cast<Eigen::Index>(c.size()), 9), {}};
  for (std::size_t n = 0; n < c.size(); ++n) d.phi.row(static_cast<Eigen::Index>(n)) = epipolar_row(c.first[n], c.second[n]);
  d.weighted = c.weights.asDiagonal() * d.phi;
  return d;
}

/// Minimizes ||diag(w) Phi flat(E)|| over unit flat(E), then projects onto
/// the essential manifold. Zero-weight rows are dropped before the SVD, which
/// makes a zero weight exactly equivalent to deleting the correspondence.
inline EssentialMatrix solve_essential(const CorrespondenceSet& c) {
  const DesignMatrix d = build_design_matrix(c);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index n = 0; n < c.weights.size(); ++n) {
    if (c.weights(n) > 0.0) rows.push_back(n);
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(static_cast<Eigen::Index>(rows.size()), 9), 9);
  for (std::size_t n = 0; n < rows.size(); ++n) a.row(static_cast<Eigen::Index>(n)) = d.weighted.row(rows[n]);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(7) <= 1e-10 * sv(0)) {
    throw DegenerateGeometry("solve_essential: weighted epipolar system has rank < 8");
  }
  return EssentialMatrix::project(unflatten(svd.matrixV().col(8)));
}

/// Up-to-scale relative motion: X_second = R X_first + t, ||t|| = 1.
struct RelativePose {
  Rotation rotation;
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();

  Pose as_pose(double translation_norm = 1.0) const { return Pose(rotation, direction * translation_norm); }
};

/// The four (R, +-t) factorizations of E.
inline std::array<RelativePose, 4> decompose_essential(const EssentialMatrix& e) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(e.matrix(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  if (u.determinant() < 0.0) u = -u;
  if (v.determinant() < 0.0) v = -v;
  Eigen::Matrix3d w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Rotation r1 = Rotation::nearest(u * w * v.transpose());
  const Rotation r2 = Rotation::nearest(u * w.transpose() * v.transpose());
  const Eigen::Vector3d t = u.col(2).normalized();
  return {RelativePose{r1, t}, RelativePose{r1, -t}, RelativePose{r2, t}, RelativePose{r2, -t}};
}

/// Sum of weights of correspondences triangulating in front of both cameras.
inline double cheirality_score(const RelativePose& candidate, const CorrespondenceSet& c, bool weighted = true) {
  const Pose p = candidate.as_pose();
  double score = 0.0;
  for (std::size_t n = 0; n < c.size(); ++n) {
    const double w = c.weights(static_cast<Eigen::Index>(n));
    if (!(w > 0.0)) continue;
    const auto x = detail::triangulate_dlt(c.first[n], c.second[n], p);
    if (x && x->depth_first > 0.0 && x->depth_second > 0.0) score += weighted ? w : 1.0;
  }
  return score;
}

/// Picks the factorization with the largest (weighted) positive-depth count.
/// Throws DegenerateGeometry when no candidate reaches a strict majority.
inline RelativePose decompose_and_select(const EssentialMatrix& e, const CorrespondenceSet& c,
                                         bool weighted_vote = true) {
  c.validate();
  const auto candidates = decompose_essential(e);
  double total = 0.0;
  for (Eigen::Index n = 0; n < c.weights.size(); ++n) {
    if (c.weights(n) > 0.0) total += weighted_vote ? c.weights(n) : 1.0;
  }
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double s = cheirality_score(candidates[k], c, weighted_vote);
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  if (!(best_score > 0.5 * total)) {
    throw DegenerateGeometry("decompose_and_select: no candidate has a positive-depth majority");
  }
  return candidates[best];
}

/// First-order geometric (Sampson) distance of x_j^T E x_i = 0, in the units
/// of the calibrated coordinates.
inline double sampson_distance(const Eigen::Matrix3d& e, const Eigen::Vector2d& xi, const Eigen::Vector2d& xj) {
  const Eigen::Vector3d a(xi.x(), xi.y(), 1.0), b(xj.x(), xj.y(), 1.0);
  const Eigen::Vector3d ea = e * a, eb = e.transpose() * b;
  const double denom = ea.head<2>().squaredNorm() + eb.head<2>().squaredNorm();
  return denom > 0.0 ? std::abs(b.dot(ea)) / std::sqrt(denom) : std::numeric_limits<double>::infinity();
}

/// Consensus gate for correspondences without learned confidences: the
/// essential matrix of the random 8-subset (among positive weights) with the
/// most Sampson inliers within `threshold` picks the inliers, and the returned
/// set keeps their weights and zeroes the rest. Deterministic for a seed.
inline CorrespondenceSet consensus_filter(const CorrespondenceSet& c, int iterations, double threshold,
                                          std::uint64_t seed = 0) {
  c.validate();
  if (iterations < 1) throw InvalidArgument("consensus_filter: iterations must be >= 1");
  if (!(threshold > 0.0)) throw InvalidArgument("consensus_filter: threshold must be positive");
  std::vector<std::size_t> pool;
  for (std::size_t n = 0; n < c.size(); ++n) {
    if (c.weights(static_cast<Eigen::Index>(n)) > 0.0) pool.push_back(n);
  }
  std::mt19937_64 rng(seed);
  std::vector<char> best_mask;
  std::size_t best_count = 0;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t k = 0; k < 8; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    CorrespondenceSet sample;
    sample.weights = Eigen::VectorXd::Ones(8);
    for (std::size_t k = 0; k < 8; ++k) {
      sample.first.push_back(c.first[pool[k]]);
      sample.second.push_back(c.second[pool[k]]);
    }
    Eigen::Matrix3d e;
    try {
      e = solve_essential(sample).matrix();
    } catch (const DegenerateGeometry&) {
      continue;
    }
    std::vector<char> mask(c.size(), 0);
    std::size_t count = 0;
    for (std::size_t n : pool) {
      if (sampson_distance(e, c.first[n], c.second[n]) <= threshold) {
        mask[n] = 1;
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best_mask = std::move(mask);
    }
  }
  if (best_count < 8) throw DegenerateGeometry("consensus_filter: no hypothesis with 8 or more inliers");
  CorrespondenceSet out = c;
  for (std::size_t n = 0; n < c.size(); ++n) {
    if (!best_mask[n]) out.weights(static_cast<Eigen::Index>(n)) = 0.0;
  }
  return out;
}

/// solve_essential followed by decompose_and_select.
inline RelativePose estimate_relative_pose(const CorrespondenceSet& c, bool weighted_vote = true) {
  return decompose_and_select(solve_essential(c), c, weighted_vote);
}

}  // namespace dinovo

#endif  // DINOVO_POSE_SOLVER_HPP
