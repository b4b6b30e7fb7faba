#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "mcfuse/geometry/trajectory.hpp"

namespace mcfuse::geom {

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

// Closed-form least-squares similarity transform (Umeyama) mapping the
// positions of `est` onto `ref`: minimizes sum_i |s*R*x_i + t - y_i|^2.
// Throws DegenerateAlignmentError for < 3 points or rank-deficient input.
inline Similarity umeyama_align(const Trajectory& est, const Trajectory& ref) {
  if (est.size() != ref.size())
    throw ShapeError("umeyama_align: trajectory lengths differ");
  const std::size_t n = est.size();
  if (n < 3)
    throw DegenerateAlignmentError("umeyama_align: need at least 3 points");

  Eigen::Matrix3Xd x(3, n), y(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    x.col(i) = est.poses[i].translation;
    y.col(i) = ref.poses[i].translation;
  }
  const Vec3 mx = x.rowwise().mean();
  const Vec3 my = y.rowwise().mean();
  x.colwise() -= mx;
  y.colwise() -= my;

  const double var_x = x.squaredNorm() / static_cast<double>(n);
  if (var_x < 1e-18)
    throw DegenerateAlignmentError("umeyama_align: source points coincident");

  const Mat3 cov = y * x.transpose() / static_cast<double>(n);
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  // Rank must be >= 2 for the rotation to be determined.
  if (d(0) < 1e-15 || d(1) <= 1e-9 * d(0))
    throw DegenerateAlignmentError("umeyama_align: rank-deficient covariance");

  Vec3 s = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
    s(2) = -1.0;

  Similarity sim;
  sim.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  sim.scale = d.dot(s) / var_x;
  sim.translation = my - sim.scale * (sim.rotation * mx);
  return sim;
}

inline Trajectory apply_similarity(const Similarity& sim, const Trajectory& traj) {
  Trajectory out = traj;
  for (auto& p : out.poses) {
    p.translation = sim.apply(p.translation);
    p.rotation = sim.rotation * p.rotation;
  }
  return out;
}

}  // namespace mcfuse::geom
