#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mcfuse/errors.hpp"
#include "mcfuse/geometry/pose.hpp"

namespace mcfuse::mdn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
inline constexpr double kSigmaClamp = 10.0;            // raw log-sigma bound

// Which normalizing constant the component density uses. The proper density
// over a 6-DoF pose needs the 6-D constant; the 1-D constant is kept as an
// option since it only shifts the objective and moves sigma's optimum.
enum class Normalizer { Full6D, Scalar1D };

// Isotropic Gaussian mixture over 6-DoF relative pose: weights on the
// simplex, one 6-vector mean and one positive scalar sigma per component.
struct MixtureParams {
  Vec alphas;  // M
  Mat mus;     // M x 6, one row per component
  Vec sigmas;  // M

  int components() const { return static_cast<int>(alphas.size()); }

  void validate() const {
    const int m = components();
    if (m < 1 || mus.rows() != m || mus.cols() != 6 || sigmas.size() != m)
      throw ShapeError("mixture: inconsistent shapes");
    if (!alphas.allFinite() || !mus.allFinite() || !sigmas.allFinite())
      throw NumericalError("mixture: non-finite parameters");
    if (alphas.minCoeff() < 0.0 || std::abs(alphas.sum() - 1.0) > 1e-12)
      throw NumericalError("mixture: weights must lie on the simplex");
    if (sigmas.minCoeff() <= 0.0)
      throw NumericalError("mixture: sigmas must be positive");
  }

  // Flat layout used everywhere (raw head output, fusion input, CSV):
  // M alphas, then M x 6 mus row-major, then M sigmas.
  Vec flat() const {
    const int m = components();
    Vec out(8 * m);
    out.head(m) = alphas;
    for (int i = 0; i < m; ++i) out.segment(m + 6 * i, 6) = mus.row(i);
    out.tail(m) = sigmas;
    return out;
  }

  static MixtureParams from_flat(const Vec& flat, int m) {
    if (flat.size() != 8 * m) throw ShapeError("mixture: bad flat width");
    MixtureParams p;
    p.alphas = flat.head(m);
    p.mus.resize(m, 6);
    for (int i = 0; i < m; ++i) p.mus.row(i) = flat.segment(m + 6 * i, 6);
    p.sigmas = flat.tail(m);
    return p;
  }
};

// Maps a raw 8M head output to valid mixture parameters: softmax for the
// weights, identity for the means, clamped exponential for the sigmas.
inline MixtureParams activate_head(const Vec& raw) {
  if (raw.size() % 8 != 0 || raw.size() == 0)
    throw ShapeError("activate_head: width must be 8M");
  const int m = static_cast<int>(raw.size() / 8);
  MixtureParams p;
  const Vec a = raw.head(m);
  const Vec e = (a.array() - a.maxCoeff()).exp();
  p.alphas = e / e.sum();
  p.mus.resize(m, 6);
  for (int i = 0; i < m; ++i) p.mus.row(i) = raw.segment(m + 6 * i, 6);
  p.sigmas = raw.tail(m)
                 .array()
                 .min(kSigmaClamp)
                 .max(-kSigmaClamp)
                 .exp();
  return p;
}

inline double component_logdensity(const geom::RelativePose6& y,
                                   const Vec6& mu, double sigma,
                                   Normalizer nz = Normalizer::Full6D) {
  if (!(sigma > 0.0)) throw NumericalError("component_logdensity: sigma <= 0");
  const double r2 = (y.vec() - mu).squaredNorm();
  const double norm = nz == Normalizer::Full6D
                          ? -6.0 * std::log(sigma) - 3.0 * kLog2Pi
                          : -std::log(sigma) - 0.5 * kLog2Pi;
  return norm - r2 / (2.0 * sigma * sigma);
}

// log sum_i alpha_i N(y; mu_i, sigma_i^2 I), evaluated with a max shift so
// tiny sigmas cannot underflow the result to -inf prematurely.
inline double mixture_logdensity(const geom::RelativePose6& y,
                                 const MixtureParams& p,
                                 Normalizer nz = Normalizer::Full6D) {
  p.validate();
  const int m = p.components();
  Vec terms(m);
  for (int i = 0; i < m; ++i) {
    const double la = p.alphas[i] > 0.0
                          ? std::log(p.alphas[i])
                          : -std::numeric_limits<double>::infinity();
    terms[i] = la + component_logdensity(y, p.mus.row(i), p.sigmas[i], nz);
  }
  const double shift = terms.maxCoeff();
  if (!std::isfinite(shift)) return shift;
  return shift + std::log((terms.array() - shift).exp().sum());
}

inline geom::RelativePose6 mixture_mean(const MixtureParams& p) {
  p.validate();
  const Vec6 mean = p.mus.transpose() * p.alphas;
  return geom::RelativePose6::from_vec(mean);
}

// Law of total variance: sum_i a_i (sigma_i^2 I + mu_i mu_i^T) - m m^T.
inline Mat6 mixture_covariance(const MixtureParams& p) {
  p.validate();
  const Vec6 mean = p.mus.transpose() * p.alphas;
  Mat6 cov = Mat6::Zero();
  for (int i = 0; i < p.components(); ++i) {
    const Vec6 mu = p.mus.row(i);
    cov += p.alphas[i] *
           (p.sigmas[i] * p.sigmas[i] * Mat6::Identity() + mu * mu.transpose());
  }
  cov -= mean * mean.transpose();
  return 0.5 * (cov + cov.transpose());  // kill rounding asymmetry
}

inline geom::RelativePose6 sample(const MixtureParams& p,
                                  std::mt19937_64& rng) {
  p.validate();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng), acc = 0.0;
  int pick = p.components() - 1;
  for (int i = 0; i < p.components(); ++i) {
    acc += p.alphas[i];
    if (r <= acc) {
      pick = i;
      break;
    }
  }
  std::normal_distribution<double> n(0.0, 1.0);
  Vec6 v;
  for (int k = 0; k < 6; ++k) v[k] = p.mus(pick, k) + p.sigmas[pick] * n(rng);
  return geom::RelativePose6::from_vec(v);
}

inline geom::RelativePose6 sample(const MixtureParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample(p, rng);
}

// ---- serialization -------------------------------------------------------

// CSV: one row per time step, 8M columns in flat layout.
inline void save_mixture_sequence_csv(const std::string& path,
                                      const std::vector<MixtureParams>& seq,
                                      const std::string& provenance = "") {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  if (!provenance.empty()) out << "# " << provenance << "\n";
  char buf[32];
  for (const MixtureParams& p : seq) {
    const Vec flat = p.flat();
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", flat[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  }
}

inline std::vector<MixtureParams> load_mixture_sequence_csv(
    const std::string& path, int m) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<MixtureParams> seq;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Vec flat(8 * m);
    std::string cell;
    for (int i = 0; i < 8 * m; ++i) {
      if (!std::getline(ss, cell, ','))
        throw ParseError(path, lineno, "expected " + std::to_string(8 * m) +
                                           " columns");
      try {
        flat[i] = std::stod(cell);
      } catch (const std::exception&) {
        throw ParseError(path, lineno, "bad number: " + cell);
      }
    }
    seq.push_back(MixtureParams::from_flat(flat, m));
  }
  return seq;
}

// Checkpoint-embedded form: one T x 8M array per camera.
inline Mat mixtures_to_matrix(const std::vector<MixtureParams>& seq) {
  if (seq.empty()) throw ShapeError("mixtures_to_matrix: empty sequence");
  Mat out(static_cast<Eigen::Index>(seq.size()), seq[0].flat().size());
  for (std::size_t t = 0; t < seq.size(); ++t)
    out.row(static_cast<Eigen::Index>(t)) = seq[t].flat();
  return out;
}

inline std::vector<MixtureParams> mixtures_from_matrix(const Mat& m) {
  if (m.cols() % 8 != 0) throw ShapeError("mixtures_from_matrix: bad width");
  std::vector<MixtureParams> out;
  out.reserve(m.rows());
  for (Eigen::Index t = 0; t < m.rows(); ++t)
    out.push_back(MixtureParams::from_flat(m.row(t).transpose(),
                                           static_cast<int>(m.cols() / 8)));
  return out;
}

}  // namespace mcfuse::mdn
