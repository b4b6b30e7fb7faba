#pragma once

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "mcfuse/sim/observe.hpp"

// On-disk scenario layout, one directory per scenario:
//   ground_truth.txt        trajectory text format
//   features_<camera>.csv   T rows x D comma-separated columns
//   meta.json               condition, seed, dt, camera order, provenance

namespace mcfuse::sim {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline json condition_to_json(const ConditionProfile& cond) {
  json j;
  j["label"] = cond.label;
  j["outlier_rate"] = cond.outlier_rate;
  j["outlier_scale"] = cond.outlier_scale;
  j["noise_multiplier"] = cond.noise_multiplier;
  return j;
}

inline ConditionProfile condition_from_json(const json& j) {
  ConditionProfile cond;
  cond.label = j.at("label").get<std::string>();
  cond.outlier_rate = j.at("outlier_rate").get<double>();
  cond.outlier_scale = j.at("outlier_scale").get<double>();
  cond.noise_multiplier =
      j.at("noise_multiplier").get<std::map<std::string, double>>();
  return cond;
}

inline void save_scenario(const fs::path& dir, const SimScenario& scn,
                          const std::string& config_hash) {
  scn.validate();
  fs::create_directories(dir);
  geom::save_trajectory((dir / "ground_truth.txt").string(), scn.trajectory,
                        "config=" + config_hash);
  char buf[32];
  for (const FeatureSequence& cam : scn.cameras) {
    std::ofstream out(dir / ("features_" + cam.camera + ".csv"));
    if (!out) throw IoError("cannot write features for " + cam.camera);
    out << "# config=" << config_hash << "\n";
    for (Eigen::Index t = 0; t < cam.features.rows(); ++t) {
      for (Eigen::Index d = 0; d < cam.features.cols(); ++d) {
        std::snprintf(buf, sizeof(buf), "%.17g", cam.features(t, d));
        out << (d ? "," : "") << buf;
      }
      out << "\n";
    }
  }
  json meta;
  meta["config"] = config_hash;
  meta["seed"] = scn.seed;
  meta["dt"] = scn.dt;
  meta["steps"] = scn.steps();
  meta["condition"] = condition_to_json(scn.condition);
  json cams = json::array();
  for (const FeatureSequence& cam : scn.cameras) cams.push_back(cam.camera);
  meta["cameras"] = cams;
  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError("cannot write meta.json in " + dir.string());
  out << meta.dump(2) << "\n";
}

inline Mat load_feature_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError(path.string(), lineno, "bad number: " + cell);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path.string(), lineno, "ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path.string(), lineno, "no data rows");
  Mat m(static_cast<Eigen::Index>(rows.size()),
        static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return m;
}

// Loads a scenario directory. The latent noisy poses are not serialized;
// the returned scenario carries empty latent_truth vectors.
inline SimScenario load_scenario(const fs::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw IoError("cannot open: " + (dir / "meta.json").string());
  json meta = json::parse(meta_in);

  SimScenario scn;
  scn.trajectory = geom::load_trajectory((dir / "ground_truth.txt").string());
  scn.condition = condition_from_json(meta.at("condition"));
  scn.seed = meta.at("seed").get<std::uint64_t>();
  scn.dt = meta.at("dt").get<double>();
  for (const auto& name : meta.at("cameras")) {
    FeatureSequence fsq;
    fsq.camera = name.get<std::string>();
    fsq.features = load_feature_csv(dir / ("features_" + fsq.camera + ".csv"));
    scn.cameras.push_back(std::move(fsq));
  }
  scn.validate();
  return scn;
}

}  // namespace mcfuse::sim
