#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "mcfuse/mdn/model.hpp"
#include "mcfuse/nn/params.hpp"
#include "mcfuse/sim/observe.hpp"
#include "mcfuse/training.hpp"

namespace mcfuse::mdn {

// A column batch of training windows: steps[k] is D x B (window slot k for
// every example), targets is 6 x B.
struct WindowBatch {
  std::vector<Mat> steps;
  Mat targets;

  Eigen::Index size() const { return targets.cols(); }
};

inline WindowBatch gather(const WindowBatch& all,
                          const std::vector<int>& idx) {
  WindowBatch out;
  out.steps.resize(all.steps.size());
  for (std::size_t k = 0; k < all.steps.size(); ++k) {
    out.steps[k].resize(all.steps[k].rows(),
                        static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
      out.steps[k].col(static_cast<Eigen::Index>(j)) =
          all.steps[k].col(idx[j]);
  }
  out.targets.resize(6, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    out.targets.col(static_cast<Eigen::Index>(j)) = all.targets.col(idx[j]);
  return out;
}

// Every (scenario, step) pair of one camera, targets taken from the
// ground-truth trajectory.
inline WindowBatch build_window_batch(
    const std::vector<const sim::SimScenario*>& scenarios, int camera_index,
    int window) {
  if (scenarios.empty()) throw ShapeError("build_window_batch: no scenarios");
  Eigen::Index total = 0;
  for (const auto* s : scenarios) total += s->steps();

  WindowBatch batch;
  batch.steps.assign(window, Mat());
  const Eigen::Index d =
      scenarios[0]->cameras.at(camera_index).features.cols();
  for (auto& m : batch.steps) m.resize(d, total);
  batch.targets.resize(6, total);

  Eigen::Index off = 0;
  for (const auto* s : scenarios) {
    const auto steps =
        MdnModel::window_steps(s->cameras.at(camera_index).features, window);
    const Eigen::Index t_count = s->steps();
    for (int k = 0; k < window; ++k)
      batch.steps[k].middleCols(off, t_count) = steps[k];
    for (Eigen::Index t = 0; t < t_count; ++t)
      batch.targets.col(off + t) =
          geom::relative(s->trajectory.poses[t], s->trajectory.poses[t + 1])
              .vec();
    off += t_count;
  }
  return batch;
}

// Stage-1 training of one per-camera head: minibatch Adam on the mixture
// NLL with plateau scheduling; the best-validation parameters are restored
// before returning.
inline TrainResult train_mdn(MdnModel& model, const WindowBatch& train,
                             const WindowBatch& val, const OptimConfig& cfg) {
  if (train.size() < 1 || val.size() < 1)
    throw ShapeError("train_mdn: empty split");
  std::mt19937_64 rng(cfg.seed);
  nn::PlateauScheduler sched(cfg.lr, cfg.patience, cfg.decay);

  auto eval_nll = [&](const WindowBatch& batch) {
    nn::Tape tape;
    return model.nll_graph(tape, batch.steps, batch.targets).value()(0, 0);
  };

  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  auto best = model.params().snapshot();

  std::vector<int> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const double lr = sched.lr();
    double acc = 0.0;
    Eigen::Index seen = 0;
    for (std::size_t pos = 0; pos < perm.size();
         pos += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end =
          std::min(perm.size(), pos + static_cast<std::size_t>(cfg.batch));
      const std::vector<int> idx(perm.begin() + pos, perm.begin() + end);
      const WindowBatch sub = gather(train, idx);
      nn::Tape tape;
      nn::Var loss = model.nll_graph(tape, sub.steps, sub.targets);
      const double v = loss.value()(0, 0);
      if (!std::isfinite(v))
        throw TrainingDivergedError("mdn train loss non-finite");
      tape.backward(loss);
      nn::adam_step(model.params(), tape.gradients(), lr);
      acc += v * static_cast<double>(idx.size());
      seen += static_cast<Eigen::Index>(idx.size());
    }
    const double train_loss = acc / static_cast<double>(seen);
    const double val_loss = eval_nll(val);
    if (!std::isfinite(val_loss))
      throw TrainingDivergedError("mdn validation loss non-finite");
    result.log.push_back({epoch, train_loss, val_loss, lr});
    if (val_loss < result.best_val) {
      result.best_val = val_loss;
      result.best_epoch = epoch;
      best = model.params().snapshot();
    }
    sched.observe(val_loss);
  }
  model.params().restore(best);
  return result;
}

}  // namespace mcfuse::mdn
