#pragma once

#include <cstdint>
#include <random>

#include "mcfuse/geometry/trajectory.hpp"

namespace mcfuse::sim {

inline constexpr double kMaxSpeed = 17.5;  // m/s, = 63 km/h

struct MotionConfig {
  int steps = 51;             // pose count, >= 2
  double dt = 0.5;            // seconds between poses
  double max_speed = kMaxSpeed;
  double max_accel = 2.0;     // m/s^2
  double max_yaw_rate = 0.5;  // rad/s at speed
  double stop_prob = 0.02;    // per-step chance of entering a stop
};

// Smooth planar driving path: low-pass filtered random accelerations and yaw
// rates integrated under a hard speed clamp, with occasional stop segments.
inline geom::Trajectory generate_trajectory(const MotionConfig& cfg,
                                            std::uint64_t seed) {
  if (cfg.steps < 2) throw ConfigError("generate_trajectory: steps must be >= 2");
  if (cfg.dt <= 0.0) throw ConfigError("generate_trajectory: dt must be > 0");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> ua(-cfg.max_accel, cfg.max_accel);
  std::uniform_real_distribution<double> uw(-cfg.max_yaw_rate,
                                            cfg.max_yaw_rate);

  double v = u01(rng) * 0.6 * cfg.max_speed;
  double psi = (2.0 * u01(rng) - 1.0) * geom::kPi;
  double accel = 0.0, yaw_cmd = 0.0;
  int stop_timer = 0;
  geom::Vec3 pos = geom::Vec3::Zero();

  geom::Trajectory traj;
  traj.timestamps.reserve(cfg.steps);
  traj.poses.reserve(cfg.steps);
  traj.timestamps.push_back(0.0);
  traj.poses.emplace_back(geom::euler_to_matrix(geom::Vec3(0, 0, psi)), pos);

  for (int k = 1; k < cfg.steps; ++k) {
    double a;
    if (stop_timer > 0) {
      --stop_timer;
      a = -cfg.max_accel;  // brake and hold
    } else {
      if (u01(rng) < cfg.stop_prob)
        stop_timer = 5 + static_cast<int>(u01(rng) * 10.0);
      accel = 0.85 * accel + 0.15 * ua(rng);
      a = accel;
    }
    yaw_cmd = 0.85 * yaw_cmd + 0.15 * uw(rng);
    // No spinning in place: yaw authority fades out at low speed.
    const double w = yaw_cmd * std::min(1.0, v / 5.0);

    v = std::clamp(v + a * cfg.dt, 0.0, cfg.max_speed);
    psi = geom::wrap_angle(psi + w * cfg.dt);
    pos += v * cfg.dt * geom::Vec3(std::cos(psi), std::sin(psi), 0.0);

    traj.timestamps.push_back(k * cfg.dt);
    traj.poses.emplace_back(geom::euler_to_matrix(geom::Vec3(0, 0, psi)), pos);
  }
  return traj;
}

inline geom::Trajectory generate_trajectory(int duration_steps, double dt,
                                            std::uint64_t seed) {
  MotionConfig cfg;
  cfg.steps = duration_steps;
  cfg.dt = dt;
  return generate_trajectory(cfg, seed);
}

}  // namespace mcfuse::sim
