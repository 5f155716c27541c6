#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "dinovo/supervision.hpp"
#include "oracles.hpp"

using namespace dinovo;

namespace {

const CameraIntrinsics kK{200.0, 210.0, 80.0, 60.0, 160, 120};

/// Reprojection through 4x4 matrices and the camera matrix.
std::optional<Eigen::Vector2d> naive_reproject(const Keypoint& k, double depth, const Pose& pose) {
  const Eigen::Vector3d ray = kK.matrix().inverse() * Eigen::Vector3d(k.y, k.x, 1.0);
  const Eigen::Vector4d x = pose.matrix() * (depth * ray).homogeneous();
  if (x.z() <= 0.0) return std::nullopt;
  const Eigen::Vector3d h = kK.matrix() * x.head<3>();
  return Eigen::Vector2d(h.x() / h.z(), h.y() / h.z());
}

/// Brute-force labels: every (i, j) pair within tolerance is a candidate;
/// pairs are granted in order of distance, then i, then j, as long as both
/// sides are still free and j is i's nearest. A keypoint with no candidate
/// is unmatchable.
MatchLabels naive_labels(const KeypointSet& a, const DepthMap& depth, const Pose& pose, const KeypointSet& b,
                         double tol) {
  MatchLabels out;
  std::map<int, std::pair<int, double>> nearest;
  std::set<int> b_near;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int r = int(std::floor(a[i].x)), c = int(std::floor(a[i].y));
    const double d = depth(r, c);
    if (!(d > 0.0)) continue;
    const auto p = naive_reproject(a[i], d, pose);
    if (!p || p->x() < 0 || p->y() < 0 || p->x() >= kK.width || p->y() >= kK.height) {
      out.unmatchable_a.push_back(int(i));
      continue;
    }
    int best = -1;
    double best_d = 1e300;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double dist = (*p - b[j].pixel()).norm();
      if (dist <= tol) b_near.insert(int(j));
      if (dist <= tol && dist < best_d) {
        best = int(j);
        best_d = dist;
      }
    }
    if (best >= 0) nearest[int(i)] = {best, best_d};
    else out.unmatchable_a.push_back(int(i));
  }
  for (const auto& [i, jd] : nearest) {
    bool wins = true;
    for (const auto& [k, kd] : nearest) {
      if (k != i && kd.first == jd.first && (kd.second < jd.second || (kd.second == jd.second && k < i))) wins = false;
    }
    if (wins) out.matches.emplace_back(i, jd.first);
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (!b_near.count(int(j))) out.unmatchable_b.push_back(int(j));
  }
  return out;
}

}  // namespace

TEST(Reproject, MatchesMatrixOracle) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> ur(0, 119.9), uc(0, 159.9), ud(2.0, 9.0);
  const Pose pose(Rotation::exp(Eigen::Vector3d(0.02, -0.05, 0.01)), Eigen::Vector3d(0.3, -0.1, 0.2));
  for (int i = 0; i < 50; ++i) {
    const Keypoint k{ur(rng), uc(rng), 1.0};
    const double d = ud(rng);
    DepthMap depth(120, 160, d);
    const auto got = reproject(k, depth, pose, kK);
    const auto want = naive_reproject(k, d, pose);
    ASSERT_TRUE(got && want);
    EXPECT_LT((*got - *want).norm(), 1e-9);
  }
}

TEST(Reproject, UndefinedDepthOrBehindCamera) {
  DepthMap depth(120, 160, 0.0);
  EXPECT_FALSE(reproject({10, 10, 1}, depth, Pose(), kK));
  depth(10, 10) = std::nan("");
  EXPECT_FALSE(reproject({10, 10, 1}, depth, Pose(), kK));
  depth(10, 10) = 1.0;
  EXPECT_FALSE(reproject({10, 10, 1}, depth, Pose(Rotation(), Eigen::Vector3d(0, 0, -5)), kK));
  EXPECT_FALSE(depth_at(depth, {-1, 3, 1}));
}

TEST(Labels, MatchBruteForceOracle) {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> ur(0, 119.9), uc(0, 159.9), ud(3.0, 8.0), u01(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose pose(Rotation::exp(Eigen::Vector3d(0.0, 0.03, 0.0)), Eigen::Vector3d(-0.2, 0.0, 0.05));
    DepthMap depth(120, 160);
    for (int r = 0; r < 120; ++r) {
      for (int c = 0; c < 160; ++c) depth(r, c) = u01(rng) < 0.1 ? 0.0 : ud(rng);
    }
    KeypointSet a{120, 160, {}}, b{120, 160, {}};
    for (int i = 0; i < 60; ++i) a.points.push_back({std::floor(ur(rng)), std::floor(uc(rng)), 1.0});
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto p = reproject(a[i], depth, pose, kK);
      if (p && u01(rng) < 0.7) b.points.push_back({p->y() + u01(rng), p->x() - u01(rng), 1.0});
    }
    for (int i = 0; i < 20; ++i) b.points.push_back({ur(rng), uc(rng), 1.0});
    const auto got = gt_correspondences(a, depth, pose, kK, b, 3.0);
    const auto want = naive_labels(a, depth, pose, b, 3.0);
    EXPECT_EQ(got.matches, want.matches);
    EXPECT_EQ(got.unmatchable_a, want.unmatchable_a);
    EXPECT_EQ(got.unmatchable_b, want.unmatchable_b);
    std::set<int> ua, ub;
    for (const auto& [i, j] : got.matches) {
      EXPECT_TRUE(ua.insert(i).second);
      EXPECT_TRUE(ub.insert(j).second);
    }
  }
}

TEST(Labels, IdentityPoseMatchesEachKeypointToItself) {
  const KeypointSet kp{120, 160, {{10, 20, 1}, {50, 60, 1}, {100, 150, 1}}};
  const auto l = gt_correspondences(kp, DepthMap(120, 160, 4.0), Pose(), kK, kp);
  EXPECT_EQ(l.matches, (std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}}));
  EXPECT_TRUE(l.unmatchable_a.empty());
  EXPECT_TRUE(l.unmatchable_b.empty());
  EXPECT_THROW(gt_correspondences(kp, DepthMap(10, 10, 1.0), Pose(), kK, kp), InvalidArgument);
}

TEST(MatchLoss, MatchesNaiveFormula) {
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<AssignmentMatrix> layers;
  for (int l = 0; l < 3; ++l) {
    layers.push_back({Eigen::MatrixXd::NullaryExpr(4, 5, [&] { return u(rng); }),
                      Eigen::VectorXd::NullaryExpr(4, [&] { return u(rng); }),
                      Eigen::VectorXd::NullaryExpr(5, [&] { return u(rng); })});
  }
  const MatchLabels labels{{{0, 1}, {2, 3}}, {1}, {0, 4}};
  double want = 0.0;
  for (const auto& p : layers) {
    const double m = (std::log(p.probabilities(0, 1)) + std::log(p.probabilities(2, 3))) / 2.0;
    const double ua = std::log(1.0 - p.matchability_a(1));
    const double ub = (std::log(1.0 - p.matchability_b(0)) + std::log(1.0 - p.matchability_b(4))) / 2.0;
    want += -(m + 0.5 * ua + 0.5 * ub) / 3.0;
  }
  EXPECT_NEAR(match_loss(layers, labels), want, 1e-12);
}

TEST(MatchLoss, ZeroOnPerfectPrediction) {
  AssignmentMatrix p{Eigen::MatrixXd::Zero(3, 3), Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)};
  p.probabilities(0, 1) = 1.0;
  p.probabilities(1, 0) = 1.0;
  EXPECT_EQ(match_loss({p, p}, MatchLabels{{{0, 1}, {1, 0}}, {2}, {2}}), 0.0);
}

TEST(MatchLoss, ClampedAndValidated) {
  AssignmentMatrix p{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)};
  const double l = match_loss({p}, MatchLabels{{{0, 0}}, {}, {}});
  EXPECT_NEAR(l, -std::log(1e-12), 1e-9);
  EXPECT_THROW(match_loss({}, MatchLabels{{{0, 0}}, {}, {}}), InvalidArgument);
  EXPECT_THROW(match_loss({p}, MatchLabels{}), InvalidArgument);
}

TEST(PoseLoss, ZeroForIdenticalAndScaledTranslation) {
  std::mt19937_64 rng(64);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const Rotation r = Rotation::from_matrix(oracle::random_rotation(rng, 2.5));
    const Eigen::Vector3d t(g(rng), g(rng), g(rng));
    const Pose gt(r, t);
    EXPECT_EQ(pose_loss(gt, gt), 0.0);
    const double s = std::exp(2.0 * g(rng));
    EXPECT_NEAR(pose_loss(Pose(r, s * t), gt), 0.0, 1e-9);
    LossConfig geo;
    geo.geodesic_rotation = true;
    EXPECT_NEAR(pose_loss(Pose(r, s * t), gt, geo), 0.0, 1e-7);
  }
}

TEST(PoseLoss, WeightsComponents) {
  const Pose gt(Rotation(), Eigen::Vector3d(1, 0, 0));
  const Pose flipped(Rotation(), Eigen::Vector3d(-2, 0, 0));
  EXPECT_NEAR(pose_loss(flipped, gt), 400.0 * 2.0, 1e-9);
  const Pose turned(Rotation::about_z(0.1), Eigen::Vector3d(3, 0, 0));
  EXPECT_NEAR(pose_loss(turned, gt), 180.0 * 0.1, 1e-9);
  LossConfig cfg;
  cfg.lambda_p = 1.5;
  EXPECT_THROW(pose_loss(gt, gt, cfg), InvalidArgument);
}

TEST(TotalLoss, EndpointsAreExact) {
  const double m = 0.123456789, p = 98.7654321;
  EXPECT_EQ(total_loss(m, p, 0.0), m);
  EXPECT_EQ(total_loss(m, p, 1.0), p);
  EXPECT_NEAR(total_loss(m, p, 0.25), 0.75 * m + 0.25 * p, 1e-12);
  EXPECT_THROW(total_loss(m, p, -0.1), InvalidArgument);
  EXPECT_THROW(total_loss(m, p, 1.1), InvalidArgument);
}
