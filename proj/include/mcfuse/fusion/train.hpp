#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "mcfuse/fusion/model.hpp"
#include "mcfuse/geometry/trajectory.hpp"
#include "mcfuse/mdn/model.hpp"
#include "mcfuse/mdn/train.hpp"
#include "mcfuse/sim/observe.hpp"
#include "mcfuse/training.hpp"

namespace mcfuse::fusion {

// One drive, ready for the fusion stage: activated per-camera mixture
// parameters stacked in rig order per step, and the ground-truth relative
// poses as targets.
struct FusionSequence {
  Mat inputs;   // (N*8M) x T
  Mat targets;  // 6 x T
};

inline FusionSequence build_fusion_sequence(
    const sim::SimScenario& scn,
    const std::vector<const mdn::MdnModel*>& heads) {
  if (heads.size() != scn.cameras.size())
    throw ShapeError("build_fusion_sequence: head count disagrees with rig");
  const int t_count = scn.steps();
  FusionSequence seq;
  seq.targets.resize(6, t_count);
  for (int t = 0; t < t_count; ++t)
    seq.targets.col(t) =
        geom::relative(scn.trajectory.poses[t], scn.trajectory.poses[t + 1])
            .vec();

  std::vector<Mat> blocks;
  Eigen::Index width = 0;
  for (std::size_t n = 0; n < heads.size(); ++n) {
    blocks.push_back(heads[n]->infer_mixture_matrix(scn.cameras[n].features));
    width += blocks.back().rows();
  }
  seq.inputs.resize(width, t_count);
  Eigen::Index off = 0;
  for (const Mat& b : blocks) {
    seq.inputs.middleRows(off, b.rows()) = b;
    off += b.rows();
  }
  return seq;
}

inline std::vector<FusionSequence> build_fusion_dataset(
    const std::vector<const sim::SimScenario*>& scenarios,
    const std::vector<const mdn::MdnModel*>& heads) {
  std::vector<FusionSequence> out;
  out.reserve(scenarios.size());
  for (const auto* s : scenarios)
    out.push_back(build_fusion_sequence(*s, heads));
  return out;
}

namespace detail {

// Gathers a sequence minibatch into per-step column batches, optionally
// zeroing one camera block per sequence (sensor-failure augmentation).
inline std::vector<Mat> batch_steps(const std::vector<FusionSequence>& seqs,
                                    const std::vector<int>& idx,
                                    const std::vector<int>& dropped_camera,
                                    int block_width) {
  const Eigen::Index t_count = seqs[idx[0]].inputs.cols();
  std::vector<Mat> steps(t_count);
  for (Eigen::Index t = 0; t < t_count; ++t)
    steps[t].resize(seqs[idx[0]].inputs.rows(),
                    static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const Mat& in = seqs[idx[j]].inputs;
    if (in.cols() != t_count)
      throw ShapeError("train_fusion: unequal sequence lengths in a batch");
    for (Eigen::Index t = 0; t < t_count; ++t) {
      steps[t].col(static_cast<Eigen::Index>(j)) = in.col(t);
      if (dropped_camera[j] >= 0)
        steps[t]
            .col(static_cast<Eigen::Index>(j))
            .segment(dropped_camera[j] * block_width, block_width)
            .setZero();
    }
  }
  return steps;
}

inline std::vector<Mat> batch_targets(const std::vector<FusionSequence>& seqs,
                                      const std::vector<int>& idx) {
  const Eigen::Index t_count = seqs[idx[0]].targets.cols();
  std::vector<Mat> targets(t_count);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    targets[t].resize(6, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
      targets[t].col(static_cast<Eigen::Index>(j)) =
          seqs[idx[j]].targets.col(t);
  }
  return targets;
}

inline double eval_loss(const FusionNet& net,
                        const std::vector<FusionSequence>& seqs,
                        double lambda_phi) {
  std::vector<int> idx(seqs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::vector<int> none(seqs.size(), -1);
  nn::Tape tape;
  const auto steps = batch_steps(seqs, idx, none, 1);
  const auto outs = net.forward_graph(tape, steps, false);
  return fusion_loss_graph(tape, outs, batch_targets(seqs, idx), lambda_phi)
      .value()(0, 0);
}

}  // namespace detail

// Stage-2 training over frozen per-camera mixtures. Input standardization
// stats are fitted on the training set once up front. With probability
// `camera_dropout`, a sequence has one camera's block zeroed for the epoch.
inline TrainResult train_fusion(FusionNet& net,
                                const std::vector<FusionSequence>& train,
                                const std::vector<FusionSequence>& val,
                                const OptimConfig& cfg,
                                double camera_dropout = 0.1) {
  if (train.empty() || val.empty())
    throw ShapeError("train_fusion: empty split");
  const int in_width = net.config().input_width();
  const int block = 8 * net.config().components;

  // Fit per-row standardization on the training inputs.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(in_width);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(in_width);
  Eigen::Index count = 0;
  for (const FusionSequence& s : train) {
    mean += s.inputs.rowwise().sum();
    sq += s.inputs.array().square().matrix().rowwise().sum();
    count += s.inputs.cols();
  }
  mean /= static_cast<double>(count);
  const Eigen::VectorXd var =
      (sq / static_cast<double>(count) - mean.array().square().matrix())
          .cwiseMax(0.0);
  net.set_input_stats(mean, var.array().sqrt());

  std::mt19937_64 rng(cfg.seed);
  nn::PlateauScheduler sched(cfg.lr, cfg.patience, cfg.decay);
  const double lambda = net.config().lambda_phi;

  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  auto best = net.params().snapshot();

  std::vector<int> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    // Sensor-failure augmentation: pick the dropped camera per sequence.
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, net.config().cameras - 1);
    std::vector<int> dropped(train.size(), -1);
    for (auto& d : dropped)
      if (u01(rng) < camera_dropout) d = pick(rng);

    const double lr = sched.lr();
    double acc = 0.0;
    std::size_t seen = 0;
    for (std::size_t pos = 0; pos < perm.size();
         pos += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end =
          std::min(perm.size(), pos + static_cast<std::size_t>(cfg.batch));
      const std::vector<int> idx(perm.begin() + pos, perm.begin() + end);
      std::vector<int> drops;
      for (int i : idx) drops.push_back(dropped[i]);
      nn::Tape tape;
      const auto steps = detail::batch_steps(train, idx, drops, block);
      const auto outs = net.forward_graph(tape, steps, true, &rng);
      nn::Var loss = fusion_loss_graph(tape, outs,
                                       detail::batch_targets(train, idx),
                                       lambda);
      const double v = loss.value()(0, 0);
      if (!std::isfinite(v))
        throw TrainingDivergedError("fusion train loss non-finite");
      tape.backward(loss);
      nn::adam_step(net.params(), tape.gradients(), lr);
      acc += v * static_cast<double>(idx.size());
      seen += idx.size();
    }
    const double train_loss = acc / static_cast<double>(seen);
    const double val_loss = detail::eval_loss(net, val, lambda);
    if (!std::isfinite(val_loss))
      throw TrainingDivergedError("fusion validation loss non-finite");
    result.log.push_back({epoch, train_loss, val_loss, lr});
    if (val_loss < result.best_val) {
      result.best_val = val_loss;
      result.best_epoch = epoch;
      best = net.params().snapshot();
    }
    sched.observe(val_loss);
  }
  net.params().restore(best);
  return result;
}

// Optional stage 3: unfreeze the heads and fine-tune everything end to end
// through the activated mixtures on the fusion loss. Off by default in the
// experiment config.
inline void joint_finetune(std::vector<mdn::MdnModel*> heads, FusionNet& net,
                           const std::vector<const sim::SimScenario*>& train,
                           const OptimConfig& cfg) {
  if (train.empty()) throw ShapeError("joint_finetune: no scenarios");
  for (std::size_t n = 0; n < heads.size(); ++n)
    if (heads[n]->tape_prefix().empty())
      throw ShapeError("joint_finetune: heads need unique tape prefixes");

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);
  const int m = heads[0]->config().components;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int si : perm) {
      const sim::SimScenario& scn = *train[si];
      nn::Tape tape;
      const int t_count = scn.steps();
      // Activated mixtures per camera for the whole sequence, on-graph.
      std::vector<nn::Var> cam_blocks;
      for (std::size_t n = 0; n < heads.size(); ++n) {
        nn::Var raw = heads[n]->head_graph(
            tape, mdn::MdnModel::window_steps(scn.cameras[n].features,
                                              heads[n]->config().window));
        cam_blocks.push_back(mdn::mixture_activate_graph(tape, raw, m));
      }
      nn::Var joint = nn::vcat(cam_blocks);  // (N*8M) x T
      // Column t is selected through a constant indicator so gradients flow
      // back into the heads.
      std::vector<nn::Var> inputs;
      std::vector<Mat> targets;
      for (int t = 0; t < t_count; ++t) {
        Mat sel = Mat::Zero(t_count, 1);
        sel(t, 0) = 1.0;
        inputs.push_back(nn::matmul(joint, tape.constant(sel)));
        targets.push_back(
            geom::relative(scn.trajectory.poses[t], scn.trajectory.poses[t + 1])
                .vec());
      }
      const auto outs = net.forward_graph(tape, inputs, true, &rng);
      nn::Var loss =
          fusion_loss_graph(tape, outs, targets, net.config().lambda_phi);
      if (!std::isfinite(loss.value()(0, 0)))
        throw TrainingDivergedError("joint fine-tune loss non-finite");
      tape.backward(loss);
      const auto grads = tape.gradients();
      // Route gradients back to each owner store.
      for (std::size_t n = 0; n < heads.size(); ++n) {
        const std::string& prefix = heads[n]->tape_prefix();
        std::map<std::string, Mat> own;
        for (const auto& [name, g] : grads)
          if (name.rfind(prefix, 0) == 0) own[name.substr(prefix.size())] = g;
        nn::adam_step(heads[n]->params(), own, cfg.lr);
      }
      std::map<std::string, Mat> net_grads;
      for (const auto& [name, g] : grads)
        if (net.params().has(name)) net_grads[name] = g;
      nn::adam_step(net.params(), net_grads, cfg.lr);
    }
  }
}

// Full inference for one scenario: frozen heads -> fusion net -> accumulated
// trajectory from the scenario's initial pose.
inline geom::Trajectory predict_sequence(
    const sim::SimScenario& scn,
    const std::vector<const mdn::MdnModel*>& heads, const FusionNet& net) {
  const FusionSequence seq = build_fusion_sequence(scn, heads);
  const auto rels = net.fuse_forward(seq.inputs);
  return geom::accumulate(scn.trajectory.poses[0], rels,
                          scn.trajectory.timestamps[0], scn.dt);
}

}  // namespace mcfuse::fusion
