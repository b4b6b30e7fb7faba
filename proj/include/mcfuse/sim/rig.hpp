#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mcfuse/geometry/pose.hpp"

namespace mcfuse::sim {

// Per-axis standard deviations of the synthetic measurement noise a camera
// adds to the true relative pose (meters / radians).
struct CameraNoise {
  geom::Vec3 trans_std = geom::Vec3::Zero();
  geom::Vec3 rot_std = geom::Vec3::Zero();
};

struct Camera {
  std::string name;
  geom::AbsolutePose extrinsic;  // camera in body frame
  CameraNoise base_noise;
};

struct CameraRig {
  std::vector<Camera> cameras;
  int feature_dim = 32;
  std::uint64_t feature_seed = 2024;

  void validate() const {
    if (cameras.empty()) throw ConfigError("rig: need at least one camera");
    if (feature_dim < 6) throw ConfigError("rig: feature_dim must be >= 6");
    for (const Camera& c : cameras) {
      if (c.name.empty()) throw ConfigError("rig: camera without a name");
      if (!geom::is_rotation(c.extrinsic.rotation, 1e-9))
        throw ConfigError("rig: extrinsic rotation invalid for " + c.name);
      if (c.base_noise.trans_std.minCoeff() <= 0.0 ||
          c.base_noise.rot_std.minCoeff() <= 0.0)
        throw ConfigError("rig: noise std-devs must be positive for " + c.name);
    }
    for (std::size_t i = 0; i < cameras.size(); ++i)
      for (std::size_t j = i + 1; j < cameras.size(); ++j)
        if (cameras[i].name == cameras[j].name)
          throw ConfigError("rig: duplicate camera name " + cameras[i].name);
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < cameras.size(); ++i)
      if (cameras[i].name == name) return static_cast<int>(i);
    throw ConfigError("rig: unknown camera " + name);
  }
};

// Weather/lighting regime: scales each camera's noise, and occasionally
// inflates a whole measurement to model occlusion/glare events.
struct ConditionProfile {
  std::string label;  // daylight | rain | night
  std::map<std::string, double> noise_multiplier;  // per camera name
  double outlier_rate = 0.0;
  double outlier_scale = 1.0;

  double multiplier_for(const std::string& camera) const {
    auto it = noise_multiplier.find(camera);
    if (it == noise_multiplier.end())
      throw ConfigError("condition '" + label + "' has no multiplier for " +
                        camera);
    return it->second;
  }

  void validate(const CameraRig& rig) const {
    if (outlier_rate < 0.0 || outlier_rate > 1.0)
      throw ConfigError("condition: outlier_rate must be in [0, 1]");
    if (outlier_scale < 1.0)
      throw ConfigError("condition: outlier_scale must be >= 1");
    for (const Camera& c : rig.cameras)
      if (multiplier_for(c.name) <= 0.0)
        throw ConfigError("condition: multipliers must be positive");
  }
};

inline const std::array<std::string, 6>& default_camera_names() {
  static const std::array<std::string, 6> names = {
      "FRONT", "FRONT_LEFT", "FRONT_RIGHT", "BACK", "BACK_LEFT", "BACK_RIGHT"};
  return names;
}

// Six cameras around the vehicle. Base noise varies per camera so the views
// are genuinely heteroscedastic even in the baseline condition.
inline CameraRig default_rig() {
  auto make = [](const std::string& name, double x, double y, double yaw,
                 double trans, double rot) {
    Camera c;
    c.name = name;
    c.extrinsic = geom::AbsolutePose(
        geom::euler_to_matrix(geom::Vec3(0, 0, yaw)), geom::Vec3(x, y, 1.5));
    c.base_noise.trans_std = geom::Vec3(trans, trans, 0.5 * trans);
    c.base_noise.rot_std = geom::Vec3(0.6 * rot, 0.6 * rot, rot);
    return c;
  };
  CameraRig rig;
  rig.cameras = {
      make("FRONT", 1.7, 0.0, 0.0, 0.040, 0.008),
      make("FRONT_LEFT", 1.5, 0.5, 0.96, 0.050, 0.010),
      make("FRONT_RIGHT", 1.5, -0.5, -0.96, 0.052, 0.010),
      make("BACK", -1.0, 0.0, geom::kPi, 0.055, 0.011),
      make("BACK_LEFT", -0.8, 0.5, 1.92, 0.065, 0.013),
      make("BACK_RIGHT", -0.8, -0.5, -1.92, 0.058, 0.012),
  };
  rig.feature_dim = 32;
  rig.feature_seed = 2024;
  return rig;
}

// The three evaluation regimes. Multiplier magnitudes are free parameters of
// the simulator chosen to reproduce the qualitative per-condition degradation
// ordering: daylight is the baseline, rain degrades every view, night hits
// the side cameras hardest and adds many outliers.
inline std::array<ConditionProfile, 3> default_conditions() {
  auto uniform = [](const std::string& label, double mult, double rate,
                    double scale) {
    ConditionProfile p;
    p.label = label;
    for (const std::string& name : default_camera_names())
      p.noise_multiplier[name] = mult;
    p.outlier_rate = rate;
    p.outlier_scale = scale;
    return p;
  };
  ConditionProfile daylight = uniform("daylight", 1.0, 0.01, 5.0);
  ConditionProfile rain = uniform("rain", 2.0, 0.05, 6.0);
  ConditionProfile night = uniform("night", 4.0, 0.10, 8.0);
  night.noise_multiplier["FRONT"] = 1.5;
  night.noise_multiplier["BACK"] = 1.5;
  return {daylight, rain, night};
}

}  // namespace mcfuse::sim
