#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mcfuse/geometry/trajectory.hpp"

namespace mcfuse::geom {

// RMSE / max / mean +- std summary of a nonnegative error series.
// Population std, so mean <= rmse <= max holds exactly.
struct RpeStats {
  double rmse = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

inline RpeStats summarize_errors(const std::vector<double>& errors) {
  if (errors.empty()) throw InsufficientLengthError("no errors to summarize");
  RpeStats s;
  double sum = 0.0, sumsq = 0.0;
  for (double e : errors) {
    sum += e;
    sumsq += e * e;
    s.max = std::max(s.max, e);
  }
  const double n = static_cast<double>(errors.size());
  s.mean = sum / n;
  s.rmse = std::sqrt(sumsq / n);
  s.std = std::sqrt(std::max(0.0, sumsq / n - s.mean * s.mean));
  return s;
}

namespace detail {

inline void check_rpe_inputs(const Trajectory& est, const Trajectory& ref,
                             int delta) {
  if (delta < 1) throw ShapeError("rpe: delta must be >= 1");
  if (est.size() != ref.size())
    throw ShapeError("rpe: trajectory lengths differ");
  if (est.size() <= static_cast<std::size_t>(delta))
    throw InsufficientLengthError("rpe: trajectory shorter than delta");
}

}  // namespace detail

// Per-index relative pose error over a horizon of `delta` steps:
//   E_i = inverse(rel(ref_i, ref_{i+delta})) * rel(est_i, est_{i+delta})
// The translation series is |translation(E_i)|.
inline std::vector<double> rpe_translation_errors(const Trajectory& est,
                                                  const Trajectory& ref,
                                                  int delta = 1) {
  detail::check_rpe_inputs(est, ref, delta);
  std::vector<double> errors;
  errors.reserve(est.size() - delta);
  for (std::size_t i = 0; i + delta < est.size(); ++i) {
    const AbsolutePose rel_ref =
        compose(inverse(ref.poses[i]), ref.poses[i + delta]);
    const AbsolutePose rel_est =
        compose(inverse(est.poses[i]), est.poses[i + delta]);
    const AbsolutePose err = compose(inverse(rel_ref), rel_est);
    errors.push_back(err.translation.norm());
  }
  return errors;
}

// Rotation-angle variant, exposed but not part of the headline stats.
inline std::vector<double> rpe_rotation_errors(const Trajectory& est,
                                               const Trajectory& ref,
                                               int delta = 1) {
  detail::check_rpe_inputs(est, ref, delta);
  std::vector<double> errors;
  errors.reserve(est.size() - delta);
  for (std::size_t i = 0; i + delta < est.size(); ++i) {
    const AbsolutePose rel_ref =
        compose(inverse(ref.poses[i]), ref.poses[i + delta]);
    const AbsolutePose rel_est =
        compose(inverse(est.poses[i]), est.poses[i + delta]);
    const AbsolutePose err = compose(inverse(rel_ref), rel_est);
    const double c = std::clamp((err.rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
    errors.push_back(std::acos(c));
  }
  return errors;
}

inline RpeStats rpe_translation(const Trajectory& est, const Trajectory& ref,
                                int delta = 1) {
  return summarize_errors(rpe_translation_errors(est, ref, delta));
}

inline RpeStats rpe_rotation(const Trajectory& est, const Trajectory& ref,
                             int delta = 1) {
  return summarize_errors(rpe_rotation_errors(est, ref, delta));
}

}  // namespace mcfuse::geom
