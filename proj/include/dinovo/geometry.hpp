#ifndef DINOVO_GEOMETRY_HPP
#define DINOVO_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "dinovo/error.hpp"

// Rigid-body and projective primitives.
//
// Pixel convention used throughout the library: a pixel vector is (u, v) with
// u the column and v the row. Keypoints carry (x = row, y = column) and
// convert with Keypoint::pixel().

namespace dinovo {

/// Proper rotation stored as an orthonormal 3x3 matrix.
class Rotation {
 public:
  Rotation() : m_(Eigen::Matrix3d::Identity()) {}

  /// Accepts `m` only if it is orthonormal with det = +1 within `tol`.
  static Rotation from_matrix(const Eigen::Matrix3d& m, double tol = 1e-9) {
    if (!m.allFinite()) throw InvalidArgument("rotation: non-finite entries");
    const double ortho = (m * m.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    const double det = m.determinant();
    if (ortho > tol || std::abs(det - 1.0) > tol) {
      throw InvalidArgument("rotation: matrix is not in SO(3)");
    }
    return Rotation(m);
  }

  /// Closest rotation in the Frobenius sense.
  static Rotation nearest(const Eigen::Matrix3d& m) {
    if (!m.allFinite()) throw InvalidArgument("rotation: non-finite entries");
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    return Rotation(svd.matrixU() * d * svd.matrixV().transpose());
  }

  /// Rodrigues map from an axis-angle vector.
  static Rotation exp(const Eigen::Vector3d& omega) {
    const double angle = omega.norm();
    if (angle < 1e-12) {
      Eigen::Matrix3d k;
      k << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(), omega.x(), 0;
      return nearest(Eigen::Matrix3d::Identity() + k);
    }
    return Rotation(Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix());
  }

  static Rotation about_x(double angle) { return exp(Eigen::Vector3d(angle, 0, 0)); }
  static Rotation about_y(double angle) { return exp(Eigen::Vector3d(0, angle, 0)); }
  static Rotation about_z(double angle) { return exp(Eigen::Vector3d(0, 0, angle)); }

  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    const double n = q.norm();
    if (!std::isfinite(n) || n == 0.0) throw InvalidArgument("rotation: degenerate quaternion");
    return Rotation(q.normalized().toRotationMatrix());
  }

  const Eigen::Matrix3d& matrix() const { return m_; }
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(m_).normalized(); }
  Rotation inverse() const { return Rotation(m_.transpose()); }

  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }
  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

 private:
  explicit Rotation(const Eigen::Matrix3d& m) : m_(m) {}
  Eigen::Matrix3d m_;
};

/// Result of the SO(3) -> so(3) logarithm. `near_pi` flags angles within 1e-3
/// of pi, where the axis sign is ill-conditioned.
struct RotationLog {
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  bool near_pi = false;
};

inline RotationLog log_rotation(const Rotation& r) {
  // Quaternion route is stable over the whole range including angle ~ pi.
  Eigen::Quaterniond q(r.matrix());
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const Eigen::Vector3d v = q.vec();
  const double vn = v.norm();
  RotationLog out;
  if (vn < 1e-12) {
    out.omega = 2.0 * v / q.w();
    return out;
  }
  const double angle = 2.0 * std::atan2(vn, q.w());
  out.omega = v * (angle / vn);
  out.near_pi = angle > std::numbers::pi - 1e-3;
  return out;
}

/// Geodesic angle of a rotation in radians.
inline double rotation_angle(const Rotation& r) {
  const double c = std::clamp(0.5 * (r.matrix().trace() - 1.0), -1.0, 1.0);
  const double s = 0.5 * Eigen::Vector3d(r.matrix()(2, 1) - r.matrix()(1, 2), r.matrix()(0, 2) - r.matrix()(2, 0),
                                         r.matrix()(1, 0) - r.matrix()(0, 1))
                             .norm();
  return std::atan2(s, c);
}

/// Similarity transform x -> scale * R * x + t. scale == 1 for rigid motion.
class Pose {
 public:
  Pose() = default;
  Pose(const Rotation& rotation, const Eigen::Vector3d& translation, double scale = 1.0)
      : rotation_(rotation), translation_(translation), scale_(scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("pose: scale must be positive");
    if (!translation.allFinite()) throw InvalidArgument("pose: non-finite translation");
  }

  static Pose identity() { return {}; }

  const Rotation& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  double scale() const { return scale_; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = scale_ * rotation_.matrix();
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return scale_ * (rotation_ * p) + translation_; }

  Pose inverse() const {
    const Rotation rt = rotation_.inverse();
    return Pose(rt, -(rt * translation_) / scale_, 1.0 / scale_);
  }

 private:
  Rotation rotation_;
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
  double scale_ = 1.0;
};

/// a ∘ b: applies b first, then a. Scales multiply.
inline Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation() * b.rotation(), a.scale() * (a.rotation() * b.translation()) + a.translation(),
              a.scale() * b.scale());
}

inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

/// Pinhole intrinsics. Image size in pixels: width W (columns), height H (rows).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("intrinsics: focal lengths must be positive");
    if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
      throw InvalidArgument("intrinsics: principal point outside the image");
    }
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  /// Pixel (u, v) -> calibrated coordinates ((u - cx)/fx, (v - cy)/fy).
  Eigen::Vector2d normalize(const Eigen::Vector2d& pixel) const {
    return {(pixel.x() - cx) / fx, (pixel.y() - cy) / fy};
  }

  Eigen::Vector2d denormalize(const Eigen::Vector2d& xy) const { return {fx * xy.x() + cx, fy * xy.y() + cy}; }

  bool contains(const Eigen::Vector2d& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width && pixel.y() < height;
  }
};

/// Pinhole projection of a camera-frame point to pixel (u, v).
inline Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraIntrinsics& k) {
  if (!(point.z() > 0.0)) throw InvalidArgument("project: point has non-positive depth");
  return {k.fx * point.x() / point.z() + k.cx, k.fy * point.y() / point.z() + k.cy};
}

/// 3x3 matrix that is rank 2 with two equal nonzero singular values.
class EssentialMatrix {
 public:
  EssentialMatrix() = default;

  /// Projects `m` onto the essential manifold: singular values become
  /// (s, s, 0) with s the mean of the two largest.
  static EssentialMatrix project(const Eigen::Matrix3d& m) {
    if (!m.allFinite()) throw InvalidArgument("essential: non-finite entries");
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sv = svd.singularValues();
    const double s = 0.5 * (sv(0) + sv(1));
    if (!(s > 0.0)) throw DegenerateGeometry("essential: zero matrix");
    EssentialMatrix e;
    e.m_ = svd.matrixU() * Eigen::Vector3d(s, s, 0.0).asDiagonal() * svd.matrixV().transpose();
    return e;
  }

  /// [t]x R for a relative pose mapping view-1 points into view 2.
  static EssentialMatrix from_motion(const Rotation& r, const Eigen::Vector3d& t) {
    Eigen::Matrix3d tx;
    tx << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
    return project(tx * r.matrix());
  }

  const Eigen::Matrix3d& matrix() const { return m_; }

 private:
  Eigen::Matrix3d m_ = Eigen::Matrix3d::Zero();
};

struct Triangulation {
  Eigen::Vector3d point;  ///< in the first camera frame
  double depth_first = 0.0;
  double depth_second = 0.0;
};

namespace detail {

inline std::optional<Triangulation> triangulate_dlt(const Eigen::Vector2d& x1, const Eigen::Vector2d& x2,
                                                    const Pose& pose_2_from_1) {
  const Eigen::Matrix3d r = pose_2_from_1.scale() * pose_2_from_1.rotation().matrix();
  const Eigen::Vector3d& t = pose_2_from_1.translation();
  if (t.norm() < 1e-14) return std::nullopt;
  const Eigen::Vector3d ray1(x1.x(), x1.y(), 1.0);
  const Eigen::Vector3d ray2 = r.transpose() * Eigen::Vector3d(x2.x(), x2.y(), 1.0);
  if (ray1.cross(ray2).norm() <= 1e-12 * ray1.norm() * ray2.norm()) return std::nullopt;

  Eigen::Matrix<double, 3, 4> p1 = Eigen::Matrix<double, 3, 4>::Zero();
  p1.leftCols<3>().setIdentity();
  Eigen::Matrix<double, 3, 4> p2;
  p2.leftCols<3>() = r;
  p2.col(3) = t;

  Eigen::Matrix4d a;
  a.row(0) = x1.x() * p1.row(2) - p1.row(0);
  a.row(1) = x1.y() * p1.row(2) - p1.row(1);
  a.row(2) = x2.x() * p2.row(2) - p2.row(0);
  a.row(3) = x2.y() * p2.row(2) - p2.row(1);
  for (int i = 0; i < 4; ++i) a.row(i).normalize();

  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-14 * h.head<3>().norm()) return std::nullopt;
  Triangulation out;
  out.point = h.head<3>() / h(3);
  out.depth_first = out.point.z();
  out.depth_second = (pose_2_from_1 * out.point).z();
  return out;
}

}  // namespace detail

/// Linear (DLT) two-view triangulation from calibrated coordinates.
/// Throws DegenerateGeometry for zero baseline or near-parallel rays.
inline Triangulation triangulate(const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, const Pose& pose_2_from_1) {
  auto result = detail::triangulate_dlt(x1, x2, pose_2_from_1);
  if (!result) throw DegenerateGeometry("triangulate: rays are parallel or baseline is zero");
  return *result;
}

}  // namespace dinovo

#endif  // DINOVO_GEOMETRY_HPP
