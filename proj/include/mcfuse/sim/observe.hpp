#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "mcfuse/rand.hpp"
#include "mcfuse/sim/rig.hpp"
#include "mcfuse/sim/trajectory_gen.hpp"

namespace mcfuse::sim {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// What one camera reports over a drive: T feature vectors (row t describes
// the motion between poses t and t+1) plus, for tests and baselines, the
// noisy pose each feature actually encodes.
struct FeatureSequence {
  std::string camera;
  Mat features;  // T x D
  std::vector<geom::RelativePose6> latent_truth;  // the encoded noisy poses
};

struct SimScenario {
  geom::Trajectory trajectory;  // ground truth
  std::vector<FeatureSequence> cameras;
  ConditionProfile condition;
  std::uint64_t seed = 0;
  double dt = 0.0;

  int steps() const { return static_cast<int>(trajectory.size()) - 1; }

  void validate() const {
    trajectory.validate();
    for (const FeatureSequence& f : cameras)
      if (f.features.rows() != steps())
        throw ShapeError("scenario: feature length disagrees with trajectory");
  }
};

// Fixed per-camera affine map behind the tanh feature encoding. Rows are
// pre-scaled per pose axis so typical pre-activations stay in tanh's
// responsive range.
struct FeatureMap {
  Mat a;  // D x 6
  Vec b;  // D
};

inline FeatureMap make_feature_map(int feature_dim, std::uint64_t seed,
                                   double dt, double max_speed = kMaxSpeed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMap map;
  map.a.resize(feature_dim, 6);
  const double g = 1.0 / std::sqrt(6.0);
  for (Eigen::Index i = 0; i < map.a.rows(); ++i)
    for (Eigen::Index j = 0; j < 6; ++j) map.a(i, j) = g * n(rng);
  // Axis scales: translations are O(max_speed*dt) meters, rotations O(0.3) rad.
  Vec scales(6);
  const double st = 1.0 / (max_speed * dt);
  scales << st, st, st, 3.0, 3.0, 3.0;
  map.a = map.a * scales.asDiagonal();
  map.b.resize(feature_dim);
  for (Eigen::Index i = 0; i < map.b.size(); ++i) map.b[i] = 0.1 * n(rng);
  return map;
}

inline std::vector<FeatureMap> rig_feature_maps(const CameraRig& rig,
                                                double dt) {
  std::vector<FeatureMap> maps;
  maps.reserve(rig.cameras.size());
  for (std::size_t n = 0; n < rig.cameras.size(); ++n)
    maps.push_back(
        make_feature_map(rig.feature_dim, mix_seed(rig.feature_seed, n), dt));
  return maps;
}

// Turns a ground-truth drive into per-camera feature streams. Per camera and
// step: draw one outlier gate, then Gaussian noise scaled by the camera's
// base noise and the condition multiplier; the feature row is
// tanh(A * noisy_pose + b).
inline SimScenario observe(const geom::Trajectory& traj, const CameraRig& rig,
                           const ConditionProfile& cond, std::uint64_t seed,
                           const std::vector<FeatureMap>* map_override =
                               nullptr) {
  traj.validate();
  rig.validate();
  cond.validate(rig);
  if (traj.size() < 2) throw ShapeError("observe: trajectory too short");
  if (map_override && map_override->size() != rig.cameras.size())
    throw ShapeError("observe: override map count disagrees with rig");

  const int t_count = static_cast<int>(traj.size()) - 1;
  const double dt = traj.timestamps[1] - traj.timestamps[0];

  std::vector<geom::RelativePose6> rels(t_count);
  for (int t = 0; t < t_count; ++t)
    rels[t] = geom::relative(traj.poses[t], traj.poses[t + 1]);

  SimScenario scn;
  scn.trajectory = traj;
  scn.condition = cond;
  scn.seed = seed;
  scn.dt = dt;
  scn.cameras.reserve(rig.cameras.size());

  for (std::size_t n = 0; n < rig.cameras.size(); ++n) {
    const Camera& cam = rig.cameras[n];
    const FeatureMap map =
        map_override ? (*map_override)[n]
                     : make_feature_map(rig.feature_dim,
                                        mix_seed(rig.feature_seed, n), dt);
    const double mult = cond.multiplier_for(cam.name);
    Vec std6(6);
    std6 << cam.base_noise.trans_std * mult, cam.base_noise.rot_std * mult;

    std::mt19937_64 rng(mix_seed(seed, 0xB5E5ull + n));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);

    FeatureSequence fs;
    fs.camera = cam.name;
    fs.features.resize(t_count, rig.feature_dim);
    fs.latent_truth.resize(t_count);
    for (int t = 0; t < t_count; ++t) {
      const double gate = u01(rng) < cond.outlier_rate ? cond.outlier_scale
                                                       : 1.0;
      Eigen::Matrix<double, 6, 1> noisy = rels[t].vec();
      for (int k = 0; k < 6; ++k) noisy[k] += gate * std6[k] * n01(rng);
      const geom::RelativePose6 yhat =
          geom::RelativePose6::from_vec(noisy).wrapped();
      fs.latent_truth[t] = yhat;
      fs.features.row(t) =
          (map.a * yhat.vec() + map.b).array().tanh().transpose();
    }
    scn.cameras.push_back(std::move(fs));
  }
  return scn;
}

}  // namespace mcfuse::sim
