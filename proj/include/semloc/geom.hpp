#pragma once

// Rigid-body math on SE(3), the pinhole camera, and the depth-based warp.
//
// Twist layout, used everywhere in the library and in every Jacobian:
//
//   (v_x, v_y, v_z, w_x, w_y, w_z)
//
// translational part first (meters), rotational part last (radians).
// Increments are applied by left multiplication: exp(delta) * pose.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "semloc/errors.hpp"

namespace semloc {

using Vector2d = Eigen::Vector2d;
using Vector3d = Eigen::Vector3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix3d = Eigen::Matrix3d;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix26d = Eigen::Matrix<double, 2, 6>;

inline constexpr double kDefaultZMin = 0.1;

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct Twist
{
  Vector6d coords = Vector6d::Zero();

  Twist() = default;
  explicit Twist(const Vector6d& c) : coords(c) {}
  Twist(double vx, double vy, double vz, double wx, double wy, double wz)
  {
    coords << vx, vy, vz, wx, wy, wz;
  }

  static Twist zero() { return Twist(); }

  auto translation() const { return coords.head<3>(); }
  auto rotation() const { return coords.tail<3>(); }

  double norm() const { return coords.norm(); }
};

/// Rigid transform. As a camera pose it maps camera coordinates into map
/// coordinates (map_from_camera).
struct Pose
{
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  Pose() = default;
  Pose(const Matrix3d& r, const Vector3d& t) : rotation(r), translation(t) {}

  static Pose identity() { return Pose(); }
  static Pose from_translation(const Vector3d& t) { return Pose(Matrix3d::Identity(), t); }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vector3d& t)
  {
    return Pose(q.normalized().toRotationMatrix(), t);
  }

  /// Unit quaternion with non-negative w.
  Eigen::Quaterniond quaternion() const
  {
    Eigen::Quaterniond q(rotation);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return q;
  }

  Vector3d operator*(const Vector3d& p) const { return rotation * p + translation; }
  Pose operator*(const Pose& o) const
  {
    return Pose(rotation * o.rotation, rotation * o.translation + translation);
  }

  bool is_finite() const { return rotation.allFinite() && translation.allFinite(); }
};

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }

inline Pose inverse(const Pose& a)
{
  const Matrix3d rt = a.rotation.transpose();
  return Pose(rt, -(rt * a.translation));
}

inline Matrix3d hat(const Vector3d& w)
{
  Matrix3d m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

/// Pose from twist coordinates (Rodrigues rotation, V-matrix translation).
inline Pose exp_map(const Twist& t)
{
  const Vector3d w = t.rotation();
  const Vector3d v = t.translation();
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Matrix3d W = hat(w);
  const Matrix3d W2 = W * W;

  double a, b, c;
  if (theta < 1e-4) {
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    c = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  const Matrix3d R = Matrix3d::Identity() + a * W + b * W2;
  const Matrix3d V = Matrix3d::Identity() + b * W + c * W2;
  return Pose(R, V * v);
}

/// Rotation angle in [0, pi] and the rotation vector of R.
inline Vector3d so3_log(const Matrix3d& R, double* angle_out = nullptr)
{
  const Vector3d vee(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double s = 0.5 * vee.norm();
  const double c = 0.5 * (R.trace() - 1.0);
  const double theta = std::atan2(s, c);
  if (angle_out) *angle_out = theta;

  if (theta < 1e-4) {
    // theta / (2 sin theta) = 1/2 + theta^2/12 + ...
    return (0.5 + theta * theta / 12.0) * vee;
  }
  if (theta < 2.5) {
    return (theta / (2.0 * std::sin(theta))) * vee;
  }
  // Near pi the antisymmetric part vanishes; take the axis from the
  // symmetric part and the sign from vee.
  const Matrix3d S = 0.5 * (R + R.transpose()) - c * Matrix3d::Identity();
  Eigen::Index i;
  S.diagonal().maxCoeff(&i);
  Vector3d axis = S.col(i) / std::sqrt(std::max(S(i, i), 1e-300));
  if (axis.dot(vee) < 0.0) axis = -axis;
  return theta * axis.normalized();
}

inline Twist log_map(const Pose& p)
{
  double theta = 0.0;
  const Vector3d w = so3_log(p.rotation, &theta);
  if (theta >= std::numbers::pi - 1e-6) {
    throw AmbiguousRotation("rotation angle " + std::to_string(theta) + " too close to pi");
  }
  const Matrix3d W = hat(w);
  double coeff;
  if (theta < 1e-4) {
    coeff = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    coeff = (1.0 - a / (2.0 * b)) / (theta * theta);
  }
  const Matrix3d Vinv = Matrix3d::Identity() - 0.5 * W + coeff * W * W;
  Vector6d out;
  out << Vinv * p.translation, w;
  return Twist(out);
}

/// log(inverse(b) * a)
inline Twist boxminus(const Pose& a, const Pose& b) { return log_map(inverse(b) * a); }

/// Geodesic rotation angle of a pose in radians, in [0, pi].
inline double rotation_angle(const Matrix3d& R)
{
  double theta = 0.0;
  so3_log(R, &theta);
  return theta;
}

/// Adjoint of a pose acting on twists: exp(Ad_T x) = T exp(x) T^-1.
inline Matrix6d adjoint(const Pose& T)
{
  Matrix6d A = Matrix6d::Zero();
  A.topLeftCorner<3, 3>() = T.rotation;
  A.topRightCorner<3, 3>() = hat(T.translation) * T.rotation;
  A.bottomRightCorner<3, 3>() = T.rotation;
  return A;
}

/// Lie-algebra adjoint ad(x), so that ad(x) y is the bracket [x, y].
inline Matrix6d ad(const Twist& x)
{
  Matrix6d A = Matrix6d::Zero();
  const Matrix3d W = hat(x.rotation());
  A.topLeftCorner<3, 3>() = W;
  A.topRightCorner<3, 3>() = hat(x.translation());
  A.bottomRightCorner<3, 3>() = W;
  return A;
}

/// Inverse left Jacobian of SE(3) by its Bernoulli series, truncated after
/// the sixth-order term. Accurate to ~theta^8 / 1.2e6.
inline Matrix6d left_jacobian_inverse(const Twist& x)
{
  const Matrix6d A = ad(x);
  const Matrix6d A2 = A * A;
  const Matrix6d A4 = A2 * A2;
  return Matrix6d::Identity() - 0.5 * A + (1.0 / 12.0) * A2 - (1.0 / 720.0) * A4 +
         (1.0 / 30240.0) * A4 * A2;
}

inline Matrix6d right_jacobian_inverse(const Twist& x)
{
  return left_jacobian_inverse(Twist(Vector6d(-x.coords)));
}

struct CameraIntrinsics
{
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const
  {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("focal lengths must be positive");
    if (width < 0 || height < 0) throw InvalidArgument("negative image size");
  }

  /// Intrinsics of an image whose pixels are the means of 2x2 cells.
  /// Pixel centers sit at integer coordinates, so the principal point
  /// shifts by half a fine pixel.
  CameraIntrinsics halved_mean() const
  {
    return {fx / 2.0, fy / 2.0, (cx + 0.5) / 2.0 - 0.5, (cy + 0.5) / 2.0 - 0.5, width / 2, height / 2};
  }

  /// Intrinsics of an image that keeps the top-left pixel of each 2x2 cell.
  CameraIntrinsics halved_top_left() const
  {
    return {fx / 2.0, fy / 2.0, cx / 2.0, cy / 2.0, width / 2, height / 2};
  }

  CameraIntrinsics mean_level(int level) const
  {
    CameraIntrinsics k = *this;
    for (int i = 0; i < level; ++i) k = k.halved_mean();
    return k;
  }

  CameraIntrinsics top_left_level(int level) const
  {
    CameraIntrinsics k = *this;
    for (int i = 0; i < level; ++i) k = k.halved_top_left();
    return k;
  }
};

/// Projection without error reporting; nullopt when z <= z_min.
inline std::optional<Vector2d> try_project(const CameraIntrinsics& k, const Vector3d& p,
                                           double z_min = kDefaultZMin)
{
  if (!(p.z() > z_min)) return std::nullopt;
  const double iz = 1.0 / p.z();
  return Vector2d(k.fx * p.x() * iz + k.cx, k.fy * p.y() * iz + k.cy);
}

inline Vector2d project(const CameraIntrinsics& k, const Vector3d& p, double z_min = kDefaultZMin)
{
  auto uv = try_project(k, p, z_min);
  if (!uv) throw BehindCamera("point depth " + std::to_string(p.z()) + " <= z_min");
  return *uv;
}

inline Vector3d unproject(const CameraIntrinsics& k, const Vector2d& pixel, double depth)
{
  if (!(depth > 0.0)) throw InvalidDepth("depth must be positive");
  return Vector3d(depth * (pixel.x() - k.cx) / k.fx, depth * (pixel.y() - k.cy) / k.fy, depth);
}

/// Warp a source pixel with known depth into a target image taken with
/// different intrinsics; rel maps source camera coordinates to target.
inline Vector2d warp(const CameraIntrinsics& source, const CameraIntrinsics& target, const Pose& rel,
                     const Vector2d& pixel, double depth, double z_min = kDefaultZMin)
{
  return project(target, rel * unproject(source, pixel, depth), z_min);
}

inline Vector2d warp(const CameraIntrinsics& k, const Pose& rel, const Vector2d& pixel, double depth,
                     double z_min = kDefaultZMin)
{
  return warp(k, k, rel, pixel, depth, z_min);
}

/// d(projected pixel)/d(delta) for a point p (target frame) under a left
/// increment exp(delta) applied to the transform producing p.
inline Matrix26d point_projection_jacobian(const CameraIntrinsics& k, const Vector3d& p)
{
  const double iz = 1.0 / p.z();
  const double iz2 = iz * iz;
  const double x = p.x(), y = p.y();
  Matrix26d J;
  J << k.fx * iz, 0.0, -k.fx * x * iz2, -k.fx * x * y * iz2, k.fx * (1.0 + x * x * iz2), -k.fx * y * iz,
       0.0, k.fy * iz, -k.fy * y * iz2, -k.fy * (1.0 + y * y * iz2), k.fy * x * y * iz2, k.fy * x * iz;
  return J;
}

inline Matrix26d warp_jacobian(const CameraIntrinsics& source, const CameraIntrinsics& target,
                               const Pose& rel, const Vector2d& pixel, double depth,
                               double z_min = kDefaultZMin)
{
  const Vector3d p = rel * unproject(source, pixel, depth);
  if (!(p.z() > z_min)) throw BehindCamera("warped point behind camera");
  return point_projection_jacobian(target, p);
}

inline Matrix26d warp_jacobian(const CameraIntrinsics& k, const Pose& rel, const Vector2d& pixel,
                               double depth, double z_min = kDefaultZMin)
{
  return warp_jacobian(k, k, rel, pixel, depth, z_min);
}

}  // namespace semloc
