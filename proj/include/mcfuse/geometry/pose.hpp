#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "mcfuse/errors.hpp"

// SE(3) / Euler pose algebra.
//
// Conventions used everywhere in this library:
//  - Euler angles phi = (roll, pitch, yaw), intrinsic Z-Y-X:
//      R(phi) = Rz(yaw) * Ry(pitch) * Rx(roll)
//  - Relative poses are expressed in the earlier body frame, so
//    accumulation is a left-to-right fold: P_{k+1} = P_k * T(rel_k).
//  - Angles live in (-pi, pi]; pitch recovered from a matrix is clamped
//    to [-pi/2, pi/2], and at gimbal lock (|pitch| within 1e-9 of pi/2)
//    roll is fixed to 0.

namespace mcfuse::geom {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

// 6-DoF relative motion: 3 translation components (m) followed by 3 Euler
// rotation components (rad).
struct RelativePose6 {
  Vec3 rho = Vec3::Zero();
  Vec3 phi = Vec3::Zero();

  RelativePose6() = default;
  RelativePose6(const Vec3& rho_in, const Vec3& phi_in)
      : rho(rho_in), phi(phi_in) {}

  Vec6 vec() const {
    Vec6 v;
    v << rho, phi;
    return v;
  }

  static RelativePose6 from_vec(const Vec6& v) {
    return RelativePose6(v.head<3>(), v.tail<3>());
  }

  RelativePose6 wrapped() const {
    RelativePose6 w = *this;
    for (int i = 0; i < 3; ++i) w.phi[i] = wrap_angle(w.phi[i]);
    return w;
  }

  bool finite() const { return rho.allFinite() && phi.allFinite(); }
};

// Absolute pose: rotation (orthonormal, det +1) plus translation.
struct AbsolutePose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  AbsolutePose() = default;
  AbsolutePose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {}

  static AbsolutePose identity() { return AbsolutePose(); }
};

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

inline Mat3 euler_to_matrix(const Vec3& phi) {
  return (Eigen::AngleAxisd(phi[2], Vec3::UnitZ()) *
          Eigen::AngleAxisd(phi[1], Vec3::UnitY()) *
          Eigen::AngleAxisd(phi[0], Vec3::UnitX()))
      .toRotationMatrix();
}

inline Vec3 matrix_to_euler(const Mat3& r) {
  // cos(pitch) >= 0 by construction, so pitch lands in [-pi/2, pi/2].
  const double cy = std::hypot(r(2, 1), r(2, 2));
  const double pitch = std::atan2(-r(2, 0), cy);
  double roll, yaw;
  if (cy < 1e-9) {
    // Gimbal lock: only yaw -/+ roll is observable. Fix roll = 0.
    roll = 0.0;
    yaw = std::atan2(-r(0, 1), r(1, 1));
  } else {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  }
  return Vec3(wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw));
}

inline AbsolutePose compose(const AbsolutePose& a, const AbsolutePose& b) {
  return AbsolutePose(a.rotation * b.rotation,
                      a.rotation * b.translation + a.translation);
}

inline AbsolutePose inverse(const AbsolutePose& p) {
  Mat3 rt = p.rotation.transpose();
  return AbsolutePose(rt, -(rt * p.translation));
}

// Relative motion from prev to curr, expressed in the prev body frame.
inline RelativePose6 relative(const AbsolutePose& prev,
                              const AbsolutePose& curr) {
  const AbsolutePose d = compose(inverse(prev), curr);
  return RelativePose6(d.translation, matrix_to_euler(d.rotation));
}

inline AbsolutePose step(const AbsolutePose& pose, const RelativePose6& rel) {
  return compose(pose, AbsolutePose(euler_to_matrix(rel.phi), rel.rho));
}

}  // namespace mcfuse::geom
