#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mcfuse/nn/tape.hpp"

namespace mcfuse::nn {

// Named parameter arrays plus their Adam moment accumulators. Creation order
// is preserved so initialization is reproducible for a given seed.
class ParamStore {
 public:
  struct Entry {
    Mat value;
    Mat m;  // Adam first moment
    Mat v;  // Adam second moment
    bool buffer = false;  // not a trainable parameter
  };

  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Mat& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (entries_.count(name)) throw ShapeError("duplicate parameter: " + name);
    Entry e;
    e.value = Mat::Zero(rows, cols);
    e.m = Mat::Zero(rows, cols);
    e.v = Mat::Zero(rows, cols);
    order_.push_back(name);
    return entries_.emplace(name, std::move(e)).first->second.value;
  }

  // Untrained state (normalization constants and the like): checkpointed,
  // but never differentiated or moved by the optimizer.
  Mat& create_buffer(const std::string& name, Eigen::Index rows,
                     Eigen::Index cols) {
    Mat& v = create(name, rows, cols);
    entries_.at(name).buffer = true;
    return v;
  }

  bool is_buffer(const std::string& name) const { return at(name).buffer; }

  // Uniform Xavier initialization: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
  Mat& create_xavier(const std::string& name, Eigen::Index rows,
                     Eigen::Index cols) {
    Mat& v = create(name, rows, cols);
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) v(i, j) = u(rng_);
    return v;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  Mat& value(const std::string& name) { return at(name).value; }
  const Mat& value(const std::string& name) const { return at(name).value; }

  const std::vector<std::string>& names() const { return order_; }
  std::int64_t step() const { return step_; }

  std::map<std::string, Mat> snapshot() const {
    std::map<std::string, Mat> out;
    for (const auto& [name, e] : entries_) out[name] = e.value;
    return out;
  }

  void restore(const std::map<std::string, Mat>& snap) {
    for (const auto& [name, v] : snap) at(name).value = v;
  }

  Entry& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second;
  }

  void bump_step() { ++step_; }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Entry> entries_;
  std::mt19937_64 rng_;
  std::int64_t step_ = 0;
};

// One Adam update with bias correction. Only parameters present in `grads`
// move; the shared step counter always advances by one.
inline void adam_step(ParamStore& store, const std::map<std::string, Mat>& grads,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  for (const auto& [name, g] : grads)
    if (!g.allFinite())
      throw TrainingDivergedError("non-finite gradient for " + name);

  store.bump_step();
  const double t = static_cast<double>(store.step());
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (const auto& [name, g] : grads) {
    ParamStore::Entry& e = store.at(name);
    if (g.rows() != e.value.rows() || g.cols() != e.value.cols())
      throw ShapeError("gradient shape mismatch for " + name);
    e.m = beta1 * e.m + (1.0 - beta1) * g;
    e.v = beta2 * e.v + (1.0 - beta2) * g.cwiseProduct(g);
    const Mat mhat = e.m / bc1;
    const Mat vhat = e.v / bc2;
    e.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

// Reduce-on-plateau learning rate schedule: after `patience` consecutive
// evaluations without a new best validation loss, multiply the rate by
// `factor` and restart the streak.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(double base_lr, int patience = 8,
                            double factor = 0.7)
      : lr_(base_lr), patience_(patience), factor_(factor) {
    if (base_lr <= 0.0) throw ConfigError("plateau: base lr must be > 0");
  }

  // Feed one validation loss; returns the rate to use afterwards.
  double observe(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      bad_ = 0;
    } else if (++bad_ >= patience_) {
      lr_ *= factor_;
      bad_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

}  // namespace mcfuse::nn
