#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mcfuse/errors.hpp"

// Reverse-mode automatic differentiation over dense arrays.
//
// A Tape owns the computation graph. Every operation appends one node
// holding the forward value and a backward closure; backward() walks the
// nodes in reverse creation order, which is a topological order by
// construction. Matrices are column batches: a batch of B vectors of
// width m is an m x B matrix.

namespace mcfuse::nn {

using Mat = Eigen::MatrixXd;

class Tape;

// Cheap handle into a Tape node.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int index) : tape_(tape), index_(index) {}

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int index_ = -1;
};

class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::function<void(Tape&)> back;  // captures node indices
  };

  Var constant(Mat v) { return push(std::move(v), false); }

  // A leaf whose gradient is exported by gradients() under `name`.
  Var param(const std::string& name, Mat v) {
    Var var = push(std::move(v), true);
    params_.emplace_back(name, var.index());
    return var;
  }

  Node& node(int i) { return nodes_[i]; }
  const Node& node(int i) const { return nodes_[i]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  Var push(Mat value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  void accumulate(int index, const Mat& g) {
    Node& n = nodes_[index];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }

  void accumulate_rows(int index, Eigen::Index row0, const Mat& g) {
    Node& n = nodes_[index];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad.middleRows(row0, g.rows()) += g;
  }

  // Seeds the root with gradient 1 and propagates to all ancestors.
  void backward(Var root) {
    if (root.tape() != this) throw ShapeError("backward: foreign variable");
    Node& r = nodes_[root.index()];
    if (r.value.size() != 1)
      throw ShapeError("backward: root must be a scalar (1x1)");
    if (!r.requires_grad) return;  // nothing depends on parameters
    r.grad = Mat::Ones(1, 1);
    for (int i = root.index(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && n.grad.size() != 0) n.back(*this);
    }
  }

  // Parameter-name -> gradient, zero-filled for parameters that did not
  // receive any contribution.
  std::map<std::string, Mat> gradients() const {
    std::map<std::string, Mat> out;
    for (const auto& [name, idx] : params_) {
      const Node& n = nodes_[idx];
      out[name] = n.grad.size() != 0
                      ? n.grad
                      : Mat::Zero(n.value.rows(), n.value.cols());
    }
    return out;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> params_;
};

inline const Mat& Var::value() const { return tape_->node(index_).value; }
inline const Mat& Var::grad() const { return tape_->node(index_).grad; }

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  if (a.tape() != b.tape()) throw ShapeError(std::string(op) + ": mixed tapes");
}

inline bool any_grad(const Var& a) {
  return a.tape()->node(a.index()).requires_grad;
}
inline bool any_grad(const Var& a, const Var& b) {
  return any_grad(a) || any_grad(b);
}

// Pushes the forward value, then wires a closure of the form
// back(tape, self_grad, self_value).
template <typename Back>
inline Var wire(Tape& t, Mat value, bool requires_grad, Back&& back) {
  Var v = t.push(std::move(value), requires_grad);
  if (requires_grad) {
    const int self = v.index();
    t.node(self).back = [self, back](Tape& tp) {
      back(tp, tp.node(self).grad, tp.node(self).value);
    };
  }
  return v;
}

}  // namespace detail

// ---- elementwise binary -----------------------------------------------------

inline Var add(Var a, Var b) {
  detail::require_same_shape(a, b, "add");
  const int ai = a.index(), bi = b.index();
  return detail::wire(*a.tape(), Mat(a.value() + b.value()),
                      detail::any_grad(a, b),
                      [ai, bi](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate(ai, g);
                        tp.accumulate(bi, g);
                      });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape(a, b, "sub");
  const int ai = a.index(), bi = b.index();
  return detail::wire(*a.tape(), Mat(a.value() - b.value()),
                      detail::any_grad(a, b),
                      [ai, bi](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate(ai, g);
                        tp.accumulate(bi, Mat(-g));
                      });
}

inline Var mul(Var a, Var b) {  // Hadamard product
  detail::require_same_shape(a, b, "mul");
  const int ai = a.index(), bi = b.index();
  return detail::wire(
      *a.tape(), Mat(a.value().cwiseProduct(b.value())),
      detail::any_grad(a, b), [ai, bi](Tape& tp, const Mat& g, const Mat&) {
        tp.accumulate(ai, Mat(g.cwiseProduct(tp.node(bi).value)));
        tp.accumulate(bi, Mat(g.cwiseProduct(tp.node(ai).value)));
      });
}

// ---- linear algebra ----------------------------------------------------------

inline Var matmul(Var a, Var b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree (" +
                     std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  if (a.tape() != b.tape()) throw ShapeError("matmul: mixed tapes");
  const int ai = a.index(), bi = b.index();
  return detail::wire(
      *a.tape(), Mat(a.value() * b.value()), detail::any_grad(a, b),
      [ai, bi](Tape& tp, const Mat& g, const Mat&) {
        tp.accumulate(ai, Mat(g * tp.node(bi).value.transpose()));
        tp.accumulate(bi, Mat(tp.node(ai).value.transpose() * g));
      });
}

// x (m x B) plus a column vector (m x 1) broadcast over columns.
inline Var add_bias(Var x, Var b) {
  if (b.cols() != 1 || b.rows() != x.rows())
    throw ShapeError("add_bias: bias must be " + std::to_string(x.rows()) +
                     "x1");
  if (x.tape() != b.tape()) throw ShapeError("add_bias: mixed tapes");
  const int xi = x.index(), bi = b.index();
  return detail::wire(*x.tape(),
                      Mat(x.value().colwise() + b.value().col(0)),
                      detail::any_grad(x, b),
                      [xi, bi](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate(xi, g);
                        tp.accumulate(bi, Mat(g.rowwise().sum()));
                      });
}

// x (m x B) scaled per row by a column vector (m x 1).
inline Var rowwise_scale(Var x, Var s) {
  if (s.cols() != 1 || s.rows() != x.rows())
    throw ShapeError("rowwise_scale: scale must be " + std::to_string(x.rows()) +
                     "x1");
  if (x.tape() != s.tape()) throw ShapeError("rowwise_scale: mixed tapes");
  const int xi = x.index(), si = s.index();
  return detail::wire(
      *x.tape(),
      Mat(x.value().array().colwise() * s.value().col(0).array()),
      detail::any_grad(x, s), [xi, si](Tape& tp, const Mat& g, const Mat&) {
        tp.accumulate(
            xi, Mat(g.array().colwise() * tp.node(si).value.col(0).array()));
        tp.accumulate(si,
                      Mat(g.cwiseProduct(tp.node(xi).value).rowwise().sum()));
      });
}

// ---- scalar-coefficient ops ---------------------------------------------------

inline Var scale(Var a, double c) {
  const int ai = a.index();
  return detail::wire(*a.tape(), Mat(a.value() * c), detail::any_grad(a),
                      [ai, c](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate(ai, Mat(g * c));
                      });
}

inline Var add_scalar(Var a, double c) {
  const int ai = a.index();
  return detail::wire(*a.tape(), Mat(a.value().array() + c),
                      detail::any_grad(a),
                      [ai](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate(ai, g);
                      });
}

inline Var neg(Var a) { return scale(a, -1.0); }

// ---- elementwise unary ---------------------------------------------------------

inline Var tanh_of(Var a) {
  const int ai = a.index();
  return detail::wire(*a.tape(), Mat(a.value().array().tanh()),
                      detail::any_grad(a),
                      [ai](Tape& tp, const Mat& g, const Mat& y) {
                        tp.accumulate(
                            ai, Mat(g.array() * (1.0 - y.array().square())));
                      });
}

inline Var sigmoid(Var a) {
  const int ai = a.index();
  return detail::wire(*a.tape(),
                      Mat(((-a.value().array()).exp() + 1.0).inverse()),
                      detail::any_grad(a),
                      [ai](Tape& tp, const Mat& g, const Mat& y) {
                        tp.accumulate(
                            ai, Mat(g.array() * y.array() * (1.0 - y.array())));
                      });
}

inline Var relu(Var a) {
  const int ai = a.index();
  return detail::wire(*a.tape(), Mat(a.value().cwiseMax(0.0)),
                      detail::any_grad(a),
                      [ai](Tape& tp, const Mat& g, const Mat&) {
                        const Mat mask =
                            (tp.node(ai).value.array() > 0.0).cast<double>();
                        tp.accumulate(ai, Mat(g.cwiseProduct(mask)));
                      });
}

inline Var exp_of(Var a) {
  const int ai = a.index();
  return detail::wire(*a.tape(), Mat(a.value().array().exp()),
                      detail::any_grad(a),
                      [ai](Tape& tp, const Mat& g, const Mat& y) {
                        tp.accumulate(ai, Mat(g.cwiseProduct(y)));
                      });
}

inline Var log_of(Var a) {
  const int ai = a.index();
  return detail::wire(*a.tape(), Mat(a.value().array().log()),
                      detail::any_grad(a),
                      [ai](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate(ai,
                                      Mat(g.cwiseQuotient(tp.node(ai).value)));
                      });
}

inline Var square(Var a) {
  const int ai = a.index();
  return detail::wire(*a.tape(), Mat(a.value().array().square()),
                      detail::any_grad(a),
                      [ai](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate(
                            ai, Mat(2.0 * g.cwiseProduct(tp.node(ai).value)));
                      });
}

// Pass-through gradient inside [lo, hi], zero outside.
inline Var clamp(Var a, double lo, double hi) {
  const int ai = a.index();
  return detail::wire(
      *a.tape(), Mat(a.value().cwiseMax(lo).cwiseMin(hi)),
      detail::any_grad(a), [ai, lo, hi](Tape& tp, const Mat& g, const Mat&) {
        const auto& x = tp.node(ai).value.array();
        const Mat mask = ((x >= lo) && (x <= hi)).cast<double>();
        tp.accumulate(ai, Mat(g.cwiseProduct(mask)));
      });
}

// ---- shape ops -------------------------------------------------------------------

inline Var rows(Var a, Eigen::Index r0, Eigen::Index n) {
  if (r0 < 0 || n < 1 || r0 + n > a.rows())
    throw ShapeError("rows: block out of range");
  const int ai = a.index();
  return detail::wire(*a.tape(), Mat(a.value().middleRows(r0, n)),
                      detail::any_grad(a),
                      [ai, r0](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate_rows(ai, r0, g);
                      });
}

inline Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("vcat: empty input");
  Tape& t = *parts[0].tape();
  Eigen::Index total = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ShapeError("vcat: mixed tapes");
    if (p.cols() != parts[0].cols()) throw ShapeError("vcat: column mismatch");
    total += p.rows();
    rg = rg || detail::any_grad(p);
  }
  Mat value(total, parts[0].cols());
  std::vector<std::pair<int, Eigen::Index>> spans;
  spans.reserve(parts.size());
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    value.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.index(), p.rows());
    off += p.rows();
  }
  return detail::wire(t, std::move(value), rg,
                      [spans](Tape& tp, const Mat& g, const Mat&) {
                        Eigen::Index o = 0;
                        for (const auto& [idx, n] : spans) {
                          tp.accumulate(idx, Mat(g.middleRows(o, n)));
                          o += n;
                        }
                      });
}

// ---- reductions ---------------------------------------------------------------------

inline Var colwise_sum(Var a) {  // (m x B) -> (1 x B)
  const int ai = a.index();
  const Eigen::Index m = a.rows();
  return detail::wire(*a.tape(), Mat(a.value().colwise().sum()),
                      detail::any_grad(a),
                      [ai, m](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate(ai, Mat(g.replicate(m, 1)));
                      });
}

inline Var sum_all(Var a) {  // -> (1 x 1)
  const int ai = a.index();
  return detail::wire(*a.tape(), Mat(Mat::Constant(1, 1, a.value().sum())),
                      detail::any_grad(a),
                      [ai](Tape& tp, const Mat& g, const Mat&) {
                        const Mat& v = tp.node(ai).value;
                        tp.accumulate(
                            ai, Mat(Mat::Constant(v.rows(), v.cols(), g(0, 0))));
                      });
}

inline Var mean_all(Var a) {  // -> (1 x 1)
  const int ai = a.index();
  const double inv = 1.0 / static_cast<double>(a.rows() * a.cols());
  return detail::wire(
      *a.tape(), Mat(Mat::Constant(1, 1, a.value().mean())),
      detail::any_grad(a), [ai, inv](Tape& tp, const Mat& g, const Mat&) {
        const Mat& v = tp.node(ai).value;
        tp.accumulate(
            ai, Mat(Mat::Constant(v.rows(), v.cols(), g(0, 0) * inv)));
      });
}

// ---- shifted softmax family ----------------------------------------------------------

// (M x B) -> (1 x B): per-column log(sum(exp(.))) with max shift. Columns
// that are entirely -inf stay -inf instead of producing NaN.
inline Var logsumexp_colwise(Var a) {
  const int ai = a.index();
  const Mat& x = a.value();
  Mat out(1, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).maxCoeff();
    out(0, j) = std::isfinite(m)
                    ? m + std::log((x.col(j).array() - m).exp().sum())
                    : m;
  }
  return detail::wire(
      *a.tape(), std::move(out), detail::any_grad(a),
      [ai](Tape& tp, const Mat& g, const Mat&) {
        const Mat& x = tp.node(ai).value;
        Mat grad(x.rows(), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
          const double m = x.col(j).maxCoeff();
          if (!std::isfinite(m)) {
            grad.col(j).setZero();
            continue;
          }
          Eigen::VectorXd e = (x.col(j).array() - m).exp();
          grad.col(j) = e / e.sum() * g(0, j);
        }
        tp.accumulate(ai, grad);
      });
}

inline Var softmax_colwise(Var a) {
  const int ai = a.index();
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::VectorXd e = (x.col(j).array() - x.col(j).maxCoeff()).exp();
    out.col(j) = e / e.sum();
  }
  return detail::wire(
      *a.tape(), std::move(out), detail::any_grad(a),
      [ai](Tape& tp, const Mat& g, const Mat& y) {
        Mat grad(y.rows(), y.cols());
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
          const double dot = y.col(j).dot(g.col(j));
          grad.col(j) = y.col(j).cwiseProduct(
              (g.col(j).array() - dot).matrix());
        }
        tp.accumulate(ai, grad);
      });
}

// a (M x B) minus a row (1 x B) broadcast down the rows.
inline Var sub_row_broadcast(Var a, Var r) {
  if (r.rows() != 1 || r.cols() != a.cols())
    throw ShapeError("sub_row_broadcast: row must be 1x" +
                     std::to_string(a.cols()));
  if (a.tape() != r.tape())
    throw ShapeError("sub_row_broadcast: mixed tapes");
  const int ai = a.index(), ri = r.index();
  return detail::wire(
      *a.tape(),
      Mat(a.value().array().rowwise() - r.value().row(0).array()),
      detail::any_grad(a, r), [ai, ri](Tape& tp, const Mat& g, const Mat&) {
        tp.accumulate(ai, g);
        tp.accumulate(ri, Mat(-g.colwise().sum()));
      });
}

// ---- stochastic -----------------------------------------------------------------------

// Inverted dropout: zero with probability `rate`, scale survivors by
// 1/(1-rate). Evaluation mode (training == false) is the exact identity.
inline Var dropout(Var x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ShapeError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const int xi = x.index();
  std::bernoulli_distribution keep(1.0 - rate);
  Mat mask(x.rows(), x.cols());
  const double s = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      mask(i, j) = keep(rng) ? s : 0.0;
  return detail::wire(*x.tape(), Mat(x.value().cwiseProduct(mask)),
                      detail::any_grad(x),
                      [xi, mask](Tape& tp, const Mat& g, const Mat&) {
                        tp.accumulate(xi, Mat(g.cwiseProduct(mask)));
                      });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace mcfuse::nn
