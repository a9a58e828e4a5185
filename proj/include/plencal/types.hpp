#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>

namespace plencal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base class for all recoverable errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration / input data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Rigid camera-from-world transform: X_C = rotation * X_W + translation.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Eigen::Quaterniond& q, const Vec3& t) : rotation(q), translation(t) {}

  Vec3 operator*(const Vec3& x_world) const { return rotation * x_world + translation; }

  Pose inverse() const {
    const Eigen::Quaterniond qi = rotation.conjugate();
    return Pose(qi, -(qi * translation));
  }

  /// this * other, i.e. first apply `other`, then `this`.
  Pose compose(const Pose& other) const {
    return Pose(rotation * other.rotation, rotation * other.translation + translation);
  }

  /// Camera center in world coordinates, -R^T t.
  Vec3 center() const { return -(rotation.conjugate() * translation); }

  static Pose identity() { return Pose(); }

  bool is_normalized(double tol = 1e-9) const { return std::abs(rotation.norm() - 1.0) <= tol; }
};

/// Quaternion for a rotation vector (axis * angle), safe near zero.
inline Eigen::Quaterniond quaternion_exp(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    q.normalize();
    return q;
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
}

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace plencal
