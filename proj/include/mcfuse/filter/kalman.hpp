#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mcfuse/geometry/pose.hpp"

// Kalman-filter fusion baseline over 6-DoF relative pose, with a random-walk
// process model and identity measurement matrix. Angle residuals are wrapped
// to (-pi, pi] before each update; that wrap is the filter's only
// nonlinearity.

namespace mcfuse::filter {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct KfState {
  Vec6 x = Vec6::Zero();
  Mat6 p = Mat6::Identity();

  void validate() const {
    if (!x.allFinite() || !p.allFinite())
      throw NumericalError("kf state non-finite");
    if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw NumericalError("kf covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat6> es(p);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw NumericalError("kf covariance not PSD");
  }
};

inline KfState diffuse_state(double variance = 1e6) {
  KfState s;
  s.p = variance * Mat6::Identity();
  return s;
}

struct ProcessModel {
  Mat6 q = Mat6::Zero();

  static ProcessModel diagonal(double q_trans, double q_rot) {
    ProcessModel m;
    m.q.diagonal() << q_trans, q_trans, q_trans, q_rot, q_rot, q_rot;
    return m;
  }
};

struct Measurement {
  Vec6 mean = Vec6::Zero();
  Mat6 cov = Mat6::Identity();
};

inline KfState kf_predict(const KfState& state, const ProcessModel& model) {
  KfState out = state;
  out.p = state.p + model.q;
  out.p = 0.5 * (out.p + out.p.transpose());
  return out;
}

namespace detail {

inline Vec6 wrap_pose_residual(Vec6 r) {
  for (int k = 3; k < 6; ++k) r[k] = geom::wrap_angle(r[k]);
  return r;
}

}  // namespace detail

inline KfState kf_update(const KfState& state, const Vec6& z, const Mat6& r) {
  Mat6 r_sym = 0.5 * (r + r.transpose());
  Mat6 s = state.p + r_sym;
  Eigen::LDLT<Mat6> ldlt(s);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
    r_sym += 1e-9 * Mat6::Identity();
    s = state.p + r_sym;
    ldlt.compute(s);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
      throw NumericalError("kf_update: innovation covariance not invertible");
  }
  // K = P S^-1; solve on the transpose since S is symmetric.
  const Mat6 k = ldlt.solve(state.p).transpose();
  const Vec6 resid = detail::wrap_pose_residual(z - state.x);

  KfState out;
  out.x = state.x + k * resid;
  for (int kk = 3; kk < 6; ++kk) out.x[kk] = geom::wrap_angle(out.x[kk]);
  // Joseph form keeps the covariance symmetric PSD.
  const Mat6 ik = Mat6::Identity() - k;
  out.p = ik * state.p * ik.transpose() + k * r_sym * k.transpose();
  out.p = 0.5 * (out.p + out.p.transpose());
  return out;
}

// Per step: one predict, then one update per camera in rig order; emits the
// posterior mean as the fused relative pose for that step.
inline std::vector<geom::RelativePose6> kf_fuse_sequence(
    const std::vector<std::vector<Measurement>>& steps,
    const ProcessModel& model, KfState state = diffuse_state()) {
  if (steps.empty()) throw ShapeError("kf_fuse_sequence: no steps");
  std::vector<geom::RelativePose6> out;
  out.reserve(steps.size());
  for (const auto& cams : steps) {
    if (cams.empty()) throw ShapeError("kf_fuse_sequence: step without measurements");
    state = kf_predict(state, model);
    for (const Measurement& m : cams) state = kf_update(state, m.mean, m.cov);
    out.push_back(geom::RelativePose6::from_vec(state.x));
  }
  return out;
}

// Static fusion oracle: covariance (sum R_i^-1)^-1, mean weighted by R_i^-1.
inline Measurement inverse_variance_average(
    const std::vector<Measurement>& measurements) {
  if (measurements.empty())
    throw ShapeError("inverse_variance_average: no measurements");
  Mat6 info = Mat6::Zero();
  Vec6 weighted = Vec6::Zero();
  for (const Measurement& m : measurements) {
    Eigen::LDLT<Mat6> ldlt(0.5 * (m.cov + m.cov.transpose()));
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
      throw NumericalError("inverse_variance_average: singular covariance");
    info += ldlt.solve(Mat6::Identity());
    weighted += ldlt.solve(m.mean);
  }
  Eigen::LDLT<Mat6> total(info);
  if (total.info() != Eigen::Success || total.vectorD().minCoeff() <= 0.0)
    throw NumericalError("inverse_variance_average: singular information");
  Measurement out;
  out.cov = total.solve(Mat6::Identity());
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.mean = total.solve(weighted);
  return out;
}

}  // namespace mcfuse::filter
