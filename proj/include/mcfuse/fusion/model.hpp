#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mcfuse/geometry/pose.hpp"
#include "mcfuse/nn/layers.hpp"

namespace mcfuse::fusion {

using nn::Mat;
using nn::Tape;
using nn::Var;

struct FusionConfig {
  int cameras = 6;
  int components = 5;     // M of the upstream mixtures
  int latent = 64;        // width of both input MLP layers
  int hidden = 64;        // recurrent width
  double dropout = 0.1;   // input MLP dropout while training
  double lambda_phi = 100.0;

  int input_width() const { return cameras * 8 * components; }
};

// Uncertainty-based fusion net: concatenated per-camera mixture parameters
// -> MLP (dropout + ReLU) -> LSTM carried across the whole sequence -> linear
// layer to the fused 6-DoF relative pose. Input standardization constants
// live in the store as untrained buffers so checkpoints replay identically.
class FusionNet {
 public:
  FusionNet(const FusionConfig& cfg, std::uint64_t init_seed)
      : cfg_(cfg), store_(init_seed) {
    const int in = cfg.input_width();
    store_.create_xavier("mlp1/w", cfg.latent, in);
    store_.create("mlp1/b", cfg.latent, 1);
    store_.create_xavier("mlp2/w", cfg.latent, cfg.latent);
    store_.create("mlp2/b", cfg.latent, 1);
    nn::create_lstm_params(store_, "lstm", cfg.latent, cfg.hidden);
    store_.create_xavier("out/w", 6, cfg.hidden);
    store_.create("out/b", 6, 1);
    store_.create_buffer("in_mean", in, 1);
    store_.create_buffer("in_std", in, 1).setOnes();
  }

  const FusionConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  void set_input_stats(const Eigen::VectorXd& mean,
                       const Eigen::VectorXd& std) {
    if (mean.size() != cfg_.input_width() || std.size() != mean.size())
      throw ShapeError("set_input_stats: wrong width");
    store_.value("in_mean") = mean;
    store_.value("in_std") = std.cwiseMax(1e-8);
  }

  // Sequence forward pass over already-built graph inputs (one Var of width
  // N*8M per step, shared batch). Returns one 6 x B output per step.
  std::vector<Var> forward_graph(Tape& tape, const std::vector<Var>& inputs,
                                 bool training,
                                 std::mt19937_64* rng = nullptr) const {
    if (inputs.empty()) throw ShapeError("fuse_forward: empty sequence");
    for (const Var& x : inputs)
      if (x.rows() != cfg_.input_width())
        throw ShapeError("fuse_forward: input width " +
                         std::to_string(x.rows()) + ", expected " +
                         std::to_string(cfg_.input_width()));
    if (training && cfg_.dropout > 0.0 && !rng)
      throw ShapeError("fuse_forward: training mode needs an rng");

    Var mean = tape.constant(-store_.value("in_mean"));
    Var inv_std = tape.constant(store_.value("in_std").cwiseInverse());
    Var w1 = tape.param("mlp1/w", store_.value("mlp1/w"));
    Var b1 = tape.param("mlp1/b", store_.value("mlp1/b"));
    Var w2 = tape.param("mlp2/w", store_.value("mlp2/w"));
    Var b2 = tape.param("mlp2/b", store_.value("mlp2/b"));
    nn::LstmWeights lstm = nn::lstm_params(tape, store_, "lstm");
    Var wo = tape.param("out/w", store_.value("out/w"));
    Var bo = tape.param("out/b", store_.value("out/b"));

    const Eigen::Index batch = inputs[0].cols();
    nn::LstmState state = nn::lstm_zero_state(tape, cfg_.hidden, batch);
    std::vector<Var> outs;
    outs.reserve(inputs.size());
    for (const Var& x : inputs) {
      Var xs = nn::rowwise_scale(nn::add_bias(x, mean), inv_std);
      Var p = nn::relu(nn::dense(xs, w1, b1));
      if (training) p = nn::dropout(p, cfg_.dropout, true, *rng);
      p = nn::relu(nn::dense(p, w2, b2));
      if (training) p = nn::dropout(p, cfg_.dropout, true, *rng);
      state = nn::lstm_cell(p, state, lstm);
      outs.push_back(nn::dense(state.h, wo, bo));
    }
    return outs;
  }

  std::vector<Var> forward_graph(Tape& tape, const std::vector<Mat>& inputs,
                                 bool training,
                                 std::mt19937_64* rng = nullptr) const {
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Mat& m : inputs) vars.push_back(tape.constant(m));
    return forward_graph(tape, vars, training, rng);
  }

  // Evaluation-mode inference for one sequence: inputs is (N*8M) x T.
  std::vector<geom::RelativePose6> fuse_forward(const Mat& inputs) const {
    std::vector<Mat> cols;
    cols.reserve(inputs.cols());
    for (Eigen::Index t = 0; t < inputs.cols(); ++t)
      cols.push_back(inputs.col(t));
    Tape tape;
    const auto outs = forward_graph(tape, cols, false);
    std::vector<geom::RelativePose6> rels;
    rels.reserve(outs.size());
    for (const Var& z : outs)
      rels.push_back(geom::RelativePose6::from_vec(z.value().col(0)));
    return rels;
  }

  // Batched evaluation over S sequences of equal length T: seqs[s] is
  // (N*8M) x T. Returns rels[s][t].
  std::vector<std::vector<geom::RelativePose6>> fuse_forward_batch(
      const std::vector<Mat>& seqs) const {
    if (seqs.empty()) return {};
    const Eigen::Index t_count = seqs[0].cols();
    std::vector<Mat> steps(t_count,
                           Mat(cfg_.input_width(), seqs.size()));
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      if (seqs[s].cols() != t_count)
        throw ShapeError("fuse_forward_batch: unequal sequence lengths");
      for (Eigen::Index t = 0; t < t_count; ++t)
        steps[t].col(s) = seqs[s].col(t);
    }
    Tape tape;
    const auto outs = forward_graph(tape, steps, false);
    std::vector<std::vector<geom::RelativePose6>> rels(
        seqs.size(), std::vector<geom::RelativePose6>(t_count));
    for (Eigen::Index t = 0; t < t_count; ++t)
      for (std::size_t s = 0; s < seqs.size(); ++s)
        rels[s][t] = geom::RelativePose6::from_vec(outs[t].value().col(s));
    return rels;
  }

 private:
  FusionConfig cfg_;
  nn::ParamStore store_;
};

// Weighted pose loss over a sequence batch: per step, squared translation
// error plus lambda_phi times squared rotation error, averaged over steps
// and then over the batch.
inline Var fusion_loss_graph(Tape& tape, const std::vector<Var>& predictions,
                             const std::vector<Mat>& targets,
                             double lambda_phi) {
  if (predictions.empty() || predictions.size() != targets.size())
    throw ShapeError("fusion_loss: length mismatch");
  Var total = tape.constant(Mat::Zero(1, predictions[0].cols()));
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    Var d = nn::sub(predictions[t], tape.constant(targets[t]));
    Var rho = nn::colwise_sum(nn::square(nn::rows(d, 0, 3)));
    Var phi = nn::colwise_sum(nn::square(nn::rows(d, 3, 3)));
    total = nn::add(total, nn::add(rho, nn::scale(phi, lambda_phi)));
  }
  return nn::mean_all(nn::scale(total, 1.0 / double(predictions.size())));
}

// Plain (non-graph) loss for tests and reporting.
inline double fusion_loss(const std::vector<geom::RelativePose6>& predictions,
                          const std::vector<geom::RelativePose6>& targets,
                          double lambda_phi = 100.0) {
  if (predictions.empty() || predictions.size() != targets.size())
    throw ShapeError("fusion_loss: length mismatch");
  double acc = 0.0;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    acc += (predictions[t].rho - targets[t].rho).squaredNorm();
    acc += lambda_phi * (predictions[t].phi - targets[t].phi).squaredNorm();
  }
  return acc / double(predictions.size());
}

}  // namespace mcfuse::fusion
