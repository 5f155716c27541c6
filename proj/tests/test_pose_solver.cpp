#include <random>

#include <gtest/gtest.h>

#include "dinovo/pose_solver.hpp"
#include "oracles.hpp"

using namespace dinovo;

namespace {

CorrespondenceSet from_scene(const oracle::TwoViewScene& s) {
  CorrespondenceSet c;
  c.first = s.x1;
  c.second = s.x2;
  c.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s.x1.size()));
  return c;
}

}  // namespace

TEST(EightPoint, RecoversExactMotion) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(8, 100);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = oracle::two_view_scene(rng, count(rng));
    const auto rp = estimate_relative_pose(from_scene(s));
    EXPECT_LT(oracle::rotation_distance(rp.rotation.matrix(), s.r), 1e-6);
    EXPECT_LT(oracle::direction_distance(rp.direction, s.t), 1e-6);
    EXPECT_NEAR(rp.direction.norm(), 1.0, 1e-12);
  }
}

TEST(EightPoint, ResidualOfEachRowVanishes) {
  std::mt19937_64 rng(12);
  const auto s = oracle::two_view_scene(rng, 20);
  const auto c = from_scene(s);
  const auto e = solve_essential(c);
  const auto d = build_design_matrix(c);
  EXPECT_LT((d.phi * flatten(e.matrix())).cwiseAbs().maxCoeff(), 1e-10);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(epipolar_row(c.first[i], c.second[i]) * flatten(e.matrix()),
                c.second[i].homogeneous().dot(e.matrix() * c.first[i].homogeneous()), 1e-14);
    EXPECT_LT(sampson_distance(e.matrix(), c.first[i], c.second[i]), 1e-10);
  }
  EXPECT_EQ(unflatten(flatten(e.matrix())), e.matrix());
}

TEST(EightPoint, ZeroWeightsEqualInlierOnlySolve) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = oracle::two_view_scene(rng, 40);
    auto full = from_scene(s);
    CorrespondenceSet inliers;
    std::vector<Eigen::Index> kept;
    for (std::size_t i = 0; i < full.size(); ++i) {
      if (i % 4 == 3) {
        full.second[i] += Eigen::Vector2d(u(rng), u(rng));
        full.weights(static_cast<Eigen::Index>(i)) = 0.0;
      } else {
        inliers.first.push_back(full.first[i]);
        inliers.second.push_back(full.second[i]);
      }
    }
    inliers.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(inliers.first.size()));
    const auto a = estimate_relative_pose(full), b = estimate_relative_pose(inliers);
    EXPECT_LT((a.rotation.matrix() - b.rotation.matrix()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((a.direction - b.direction).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(EightPoint, ScalingWeightsUniformlyDoesNotChangeTheSolution) {
  std::mt19937_64 rng(14);
  const auto s = oracle::two_view_scene(rng, 30);
  auto c = from_scene(s);
  const auto a = estimate_relative_pose(c);
  c.weights *= 7.5;
  const auto b = estimate_relative_pose(c);
  EXPECT_LT((a.rotation.matrix() - b.rotation.matrix()).norm(), 1e-9);
  EXPECT_LT((a.direction - b.direction).norm(), 1e-9);
}

TEST(EightPoint, RejectsTooFewOrInvalidCorrespondences) {
  std::mt19937_64 rng(15);
  const auto s = oracle::two_view_scene(rng, 10);
  auto c = from_scene(s);
  c.weights(0) = c.weights(1) = c.weights(2) = 0.0;
  EXPECT_THROW(solve_essential(c), InvalidArgument);
  c.weights.setOnes();
  c.weights(0) = -1.0;
  EXPECT_THROW(solve_essential(c), InvalidArgument);
  c.weights(0) = std::nan("");
  EXPECT_THROW(solve_essential(c), InvalidArgument);
  c.weights.setOnes();
  c.second.pop_back();
  EXPECT_THROW(solve_essential(c), InvalidArgument);
}

TEST(EightPoint, PureRotationIsDegenerate) {
  std::mt19937_64 rng(16);
  auto s = oracle::two_view_scene(rng, 30);
  CorrespondenceSet c;
  for (const auto& p : s.points) {
    const Eigen::Vector3d q = s.r * p;
    c.first.emplace_back(p.x() / p.z(), p.y() / p.z());
    c.second.emplace_back(q.x() / q.z(), q.y() / q.z());
  }
  c.weights = Eigen::VectorXd::Ones(30);
  EXPECT_THROW(estimate_relative_pose(c), DegenerateGeometry);
}

TEST(Decompose, FourCandidatesAndExactlyOneSelected) {
  std::mt19937_64 rng(17);
  const auto s = oracle::two_view_scene(rng, 30);
  const auto c = from_scene(s);
  const auto e = EssentialMatrix::from_motion(Rotation::from_matrix(s.r), s.t);
  const auto cands = decompose_essential(e);
  int full = 0;
  for (const auto& cand : cands) {
    const Eigen::Vector3d t = cand.direction;
    Eigen::Matrix3d tx;
    tx << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
    const Eigen::Matrix3d ec = tx * cand.rotation.matrix();
    // Each factorization reproduces E up to sign and scale.
    const double ratio = ec.norm() / e.matrix().norm();
    EXPECT_LT(std::min((ec / ratio - e.matrix()).norm(), (ec / ratio + e.matrix()).norm()), 1e-9);
    if (cheirality_score(cand, c) == 30.0) ++full;
  }
  EXPECT_EQ(full, 1);
  const auto sel = decompose_and_select(e, c);
  EXPECT_LT(oracle::rotation_distance(sel.rotation.matrix(), s.r), 1e-9);
  EXPECT_LT(oracle::direction_distance(sel.direction, s.t), 1e-9);
}

TEST(Decompose, WeightedVoteFollowsWeights) {
  std::mt19937_64 rng(18);
  const auto s = oracle::two_view_scene(rng, 20);
  auto c = from_scene(s);
  // Twelve observations are generated with the baseline reversed: they fit E
  // equally well but triangulate in front of both cameras only for (R, -t).
  for (int i = 0; i < 12; ++i) {
    const Eigen::Vector3d q = s.r * s.points[i] - s.t;
    c.second[i] = Eigen::Vector2d(q.x() / q.z(), q.y() / q.z());
    c.weights(i) = 0.01;
  }
  const auto e = EssentialMatrix::from_motion(Rotation::from_matrix(s.r), s.t);
  const auto weighted = decompose_and_select(e, c, true);
  EXPECT_LT(oracle::direction_distance(weighted.direction, s.t), 1e-9);
  const auto unweighted = decompose_and_select(e, c, false);
  EXPECT_LT(oracle::direction_distance(unweighted.direction, -s.t), 1e-9);
}

TEST(Consensus, RejectsGrossOutliers) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  const auto s = oracle::two_view_scene(rng, 100);
  auto c = from_scene(s);
  for (int i = 0; i < 30; ++i) c.second[3 * i] = Eigen::Vector2d(u(rng), u(rng));
  const auto filtered = consensus_filter(c, 300, 1e-4, 5);
  for (int i = 0; i < 30; ++i) EXPECT_EQ(filtered.weights(3 * i), 0.0);
  EXPECT_GE((filtered.weights.array() > 0.0).count(), 68);
  const auto rp = estimate_relative_pose(filtered);
  EXPECT_LT(oracle::rotation_distance(rp.rotation.matrix(), s.r), 1e-8);
  EXPECT_LT(oracle::direction_distance(rp.direction, s.t), 1e-8);
  const auto again = consensus_filter(c, 300, 1e-4, 5);
  EXPECT_EQ(again.weights, filtered.weights);
  EXPECT_THROW(consensus_filter(c, 0, 1e-4), InvalidArgument);
  EXPECT_THROW(consensus_filter(c, 10, 0.0), InvalidArgument);
}
