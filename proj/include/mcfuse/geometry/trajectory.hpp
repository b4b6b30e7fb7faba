#pragma once

#include <Eigen/Geometry>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mcfuse/geometry/pose.hpp"

namespace mcfuse::geom {

// Timestamped sequence of absolute poses. Timestamps are seconds and must be
// strictly increasing.
struct Trajectory {
  std::vector<double> timestamps;
  std::vector<AbsolutePose> poses;

  std::size_t size() const { return poses.size(); }

  void validate() const {
    if (poses.empty() || poses.size() != timestamps.size())
      throw ShapeError("trajectory must hold >= 1 pose with matching timestamps");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
      if (!(timestamps[i] > timestamps[i - 1]))
        throw ShapeError("trajectory timestamps must be strictly increasing");
  }
};

// Folds relative steps onto a start pose. Step k of the result satisfies
// relative(pose_k, pose_{k+1}) == rels[k].
inline Trajectory accumulate(const AbsolutePose& start,
                             const std::vector<RelativePose6>& rels,
                             double t0 = 0.0, double dt = 1.0) {
  Trajectory traj;
  traj.timestamps.reserve(rels.size() + 1);
  traj.poses.reserve(rels.size() + 1);
  traj.timestamps.push_back(t0);
  traj.poses.push_back(start);
  AbsolutePose cur = start;
  for (std::size_t k = 0; k < rels.size(); ++k) {
    if (!rels[k].finite()) throw NumericalError("non-finite relative pose");
    cur = step(cur, rels[k]);
    traj.poses.push_back(cur);
    traj.timestamps.push_back(t0 + static_cast<double>(k + 1) * dt);
  }
  return traj;
}

// Text trajectory format, one pose per line:
//   timestamp tx ty tz qx qy qz qw
// Quaternion is x y z w (w last). Lines starting with '#' are comments.

inline void save_trajectory(const std::string& path, const Trajectory& traj,
                            const std::string& provenance = "") {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char buf[256];
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Eigen::Quaterniond q(traj.poses[i].rotation);
    const Vec3& t = traj.poses[i].translation;
    std::snprintf(buf, sizeof(buf),
                  "%.12f %.12f %.12f %.12f %.12f %.12f %.12f %.12f\n",
                  traj.timestamps[i], t.x(), t.y(), t.z(), q.x(), q.y(), q.z(),
                  q.w());
    out << buf;
  }
}

inline Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double v[8];
    for (int k = 0; k < 8; ++k)
      if (!(ss >> v[k]))
        throw ParseError(path, lineno, "expected 8 numeric fields");
    std::string extra;
    if (ss >> extra) throw ParseError(path, lineno, "trailing data");
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);  // ctor takes w first
    if (q.norm() < 1e-12)
      throw ParseError(path, lineno, "zero-norm quaternion");
    q.normalize();
    traj.timestamps.push_back(v[0]);
    traj.poses.emplace_back(q.toRotationMatrix(), Vec3(v[1], v[2], v[3]));
  }
  if (traj.poses.empty()) throw ParseError(path, lineno, "no poses found");
  traj.validate();
  return traj;
}

// First '# key=value'-style provenance comment of a trajectory file, if any.
inline std::string read_provenance(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# config=", 0) == 0) return line.substr(2);
    if (!line.empty() && line[0] != '#') break;
  }
  return "";
}

}  // namespace mcfuse::geom
