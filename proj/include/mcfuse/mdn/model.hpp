#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcfuse/mdn/mixture.hpp"
#include "mcfuse/nn/checkpoint.hpp"
#include "mcfuse/nn/gradcheck.hpp"
#include "mcfuse/nn/layers.hpp"

namespace mcfuse::mdn {

using nn::Tape;
using nn::Var;

// Mean negative log likelihood of a batch of targets (6 x B) under the
// mixtures encoded by a raw head output (8M x B). Differentiable w.r.t. the
// head output and everything upstream of it.
inline Var mixture_nll_graph(Tape& tape, Var raw, const Mat& targets, int m,
                             Normalizer nz = Normalizer::Full6D) {
  if (raw.rows() != 8 * m) throw ShapeError("mixture_nll_graph: bad raw width");
  if (targets.rows() != 6 || targets.cols() != raw.cols())
    throw ShapeError("mixture_nll_graph: targets must be 6 x batch");
  if (raw.cols() < 1) throw ShapeError("mixture_nll_graph: empty batch");

  const double k = nz == Normalizer::Full6D ? 6.0 : 1.0;
  const double c = nz == Normalizer::Full6D ? 3.0 * kLog2Pi : 0.5 * kLog2Pi;

  Var alpha_block = nn::rows(raw, 0, m);
  Var logalpha =
      nn::sub_row_broadcast(alpha_block, nn::logsumexp_colwise(alpha_block));
  Var logsig = nn::clamp(nn::rows(raw, 7 * m, m), -kSigmaClamp, kSigmaClamp);
  Var y = tape.constant(targets);

  std::vector<Var> terms(m);
  for (int i = 0; i < m; ++i) {
    Var mu = nn::rows(raw, m + 6 * i, 6);
    Var sq = nn::colwise_sum(nn::square(nn::sub(mu, y)));
    Var s = nn::rows(logsig, i, 1);
    Var norm = nn::add_scalar(nn::scale(s, -k), -c);
    Var quad = nn::scale(nn::mul(sq, nn::exp_of(nn::scale(s, -2.0))), -0.5);
    terms[i] = nn::add(nn::rows(logalpha, i, 1), nn::add(norm, quad));
  }
  Var logmix = nn::logsumexp_colwise(nn::vcat(terms));
  return nn::scale(nn::mean_all(logmix), -1.0);
}

// Graph-side head activation producing the flat mixture layout (8M x B):
// softmax weights, identity means, clamped-exponential sigmas. Matches
// activate_head() exactly; lets gradients flow for joint fine-tuning.
inline Var mixture_activate_graph(Tape& tape, Var raw, int m) {
  if (raw.rows() != 8 * m)
    throw ShapeError("mixture_activate_graph: bad raw width");
  (void)tape;
  Var alphas = nn::softmax_colwise(nn::rows(raw, 0, m));
  Var mus = nn::rows(raw, m, 6 * m);
  Var sigmas =
      nn::exp_of(nn::clamp(nn::rows(raw, 7 * m, m), -kSigmaClamp, kSigmaClamp));
  return nn::vcat({alphas, mus, sigmas});
}

struct MdnConfig {
  int components = 5;   // M
  int feature_dim = 32; // D
  int hidden = 64;      // per-direction LSTM width
  int window = 5;       // sliding window length
  Normalizer normalizer = Normalizer::Full6D;
};

// Per-camera pose head: bi-directional LSTM over a causal sliding window of
// features, followed by a linear layer emitting raw mixture parameters. The
// window ends at the current step; the first steps of a sequence repeat the
// earliest frame so every window has the same length.
class MdnModel {
 public:
  // `tape_prefix` disambiguates this model's parameters when several models
  // share one tape (joint fine-tuning).
  MdnModel(const MdnConfig& cfg, std::uint64_t init_seed,
           std::string tape_prefix = "")
      : cfg_(cfg), store_(init_seed), tape_prefix_(std::move(tape_prefix)) {
    nn::create_lstm_params(store_, "bilstm/fwd", cfg.feature_dim, cfg.hidden);
    nn::create_lstm_params(store_, "bilstm/bwd", cfg.feature_dim, cfg.hidden);
    store_.create_xavier("head/w", 8 * cfg.components, 2 * cfg.hidden);
    store_.create("head/b", 8 * cfg.components, 1);
  }

  const MdnConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const std::string& tape_prefix() const { return tape_prefix_; }

  // One matrix per window position, each D x T: column t holds the feature
  // for window slot k of target step t (clamped at the sequence start).
  static std::vector<Mat> window_steps(const Mat& features /* T x D */,
                                       int window) {
    if (features.rows() < 1) throw ShapeError("window_steps: empty sequence");
    const Eigen::Index t_count = features.rows();
    std::vector<Mat> steps(window);
    for (int k = 0; k < window; ++k) {
      steps[k].resize(features.cols(), t_count);
      for (Eigen::Index t = 0; t < t_count; ++t) {
        Eigen::Index src = t - (window - 1) + k;
        if (src < 0) src = 0;
        steps[k].col(t) = features.row(src).transpose();
      }
    }
    return steps;
  }

  // Raw head output (8M x B) for a batch of windows.
  Var head_graph(Tape& tape, const std::vector<Mat>& steps) const {
    if (static_cast<int>(steps.size()) != cfg_.window)
      throw ShapeError("head_graph: wrong window length");
    std::vector<Var> xs;
    xs.reserve(steps.size());
    for (const Mat& s : steps) xs.push_back(tape.constant(s));
    auto enhanced = nn::bilstm_window(
        xs, nn::lstm_params(tape, store_, "bilstm/fwd", tape_prefix_),
        nn::lstm_params(tape, store_, "bilstm/bwd", tape_prefix_),
        cfg_.hidden);
    return nn::dense(
        enhanced.back(),
        tape.param(tape_prefix_ + "head/w", store_.value("head/w")),
        tape.param(tape_prefix_ + "head/b", store_.value("head/b")));
  }

  Var nll_graph(Tape& tape, const std::vector<Mat>& steps,
                const Mat& targets) const {
    return mixture_nll_graph(tape, head_graph(tape, steps), targets,
                             cfg_.components, cfg_.normalizer);
  }

  // Mixture parameters for every step of a feature sequence (rows = steps).
  std::vector<MixtureParams> infer_sequence(const Mat& features) const {
    Tape tape;
    Var raw = head_graph(tape, window_steps(features, cfg_.window));
    std::vector<MixtureParams> out;
    out.reserve(raw.cols());
    for (Eigen::Index t = 0; t < raw.cols(); ++t)
      out.push_back(activate_head(raw.value().col(t)));
    return out;
  }

  // Activated flat mixtures (8M x T) for a feature sequence.
  Mat infer_mixture_matrix(const Mat& features) const {
    Tape tape;
    Var raw = head_graph(tape, window_steps(features, cfg_.window));
    Mat out(raw.rows(), raw.cols());
    for (Eigen::Index t = 0; t < raw.cols(); ++t)
      out.col(t) = activate_head(raw.value().col(t)).flat();
    return out;
  }

 private:
  MdnConfig cfg_;
  nn::ParamStore store_;
  std::string tape_prefix_;
};

}  // namespace mcfuse::mdn
