#pragma once

#include <vector>

#include "mcfuse/nn/params.hpp"
#include "mcfuse/nn/tape.hpp"

namespace mcfuse::nn {

// W*x + b over a column batch.
inline Var dense(Var x, Var w, Var b) { return add_bias(matmul(w, x), b); }

struct LstmWeights {
  Var wx;  // 4H x D, gate rows ordered [input, forget, candidate, output]
  Var wh;  // 4H x H
  Var b;   // 4H x 1
};

struct LstmState {
  Var h;
  Var c;
};

inline LstmState lstm_zero_state(Tape& tape, Eigen::Index hidden,
                                 Eigen::Index batch) {
  return {tape.constant(Mat::Zero(hidden, batch)),
          tape.constant(Mat::Zero(hidden, batch))};
}

// Standard gated LSTM cell: sigmoid input/forget/output gates, tanh candidate.
inline LstmState lstm_cell(Var x, const LstmState& state,
                           const LstmWeights& w) {
  const Eigen::Index hidden = state.h.rows();
  if (w.wx.rows() != 4 * hidden || w.wh.rows() != 4 * hidden)
    throw ShapeError("lstm_cell: weights disagree with state size");
  Var z = add_bias(add(matmul(w.wx, x), matmul(w.wh, state.h)), w.b);
  Var gi = sigmoid(rows(z, 0, hidden));
  Var gf = sigmoid(rows(z, hidden, hidden));
  Var gc = tanh_of(rows(z, 2 * hidden, hidden));
  Var go = sigmoid(rows(z, 3 * hidden, hidden));
  Var c = add(mul(gf, state.c), mul(gi, gc));
  Var h = mul(go, tanh_of(c));
  return {h, c};
}

// Bi-directional LSTM over a window of W inputs (each D x B). Output k is the
// concatenation [forward_k; backward_k] (2H x B), so every output position
// depends on the whole window. Both directions start from zero states.
inline std::vector<Var> bilstm_window(const std::vector<Var>& inputs,
                                      const LstmWeights& fwd,
                                      const LstmWeights& bwd,
                                      Eigen::Index hidden) {
  if (inputs.empty()) throw ShapeError("bilstm_window: empty window");
  Tape& tape = *inputs[0].tape();
  const Eigen::Index batch = inputs[0].cols();
  const std::size_t w = inputs.size();

  std::vector<Var> fwd_h(w), bwd_h(w);
  LstmState s = lstm_zero_state(tape, hidden, batch);
  for (std::size_t k = 0; k < w; ++k) {
    s = lstm_cell(inputs[k], s, fwd);
    fwd_h[k] = s.h;
  }
  s = lstm_zero_state(tape, hidden, batch);
  for (std::size_t k = w; k-- > 0;) {
    s = lstm_cell(inputs[k], s, bwd);
    bwd_h[k] = s.h;
  }

  std::vector<Var> out(w);
  for (std::size_t k = 0; k < w; ++k) out[k] = vcat({fwd_h[k], bwd_h[k]});
  return out;
}

// Creates the three named arrays of one LSTM cell in a store.
inline void create_lstm_params(ParamStore& store, const std::string& prefix,
                               Eigen::Index input, Eigen::Index hidden) {
  store.create_xavier(prefix + "/wx", 4 * hidden, input);
  store.create_xavier(prefix + "/wh", 4 * hidden, hidden);
  store.create(prefix + "/b", 4 * hidden, 1);
}

// `tape_prefix` renames the registered parameters (grads keyed accordingly),
// which keeps several models with identical internal names apart on one tape.
inline LstmWeights lstm_params(Tape& tape, const ParamStore& store,
                               const std::string& prefix,
                               const std::string& tape_prefix = "") {
  return {tape.param(tape_prefix + prefix + "/wx", store.value(prefix + "/wx")),
          tape.param(tape_prefix + prefix + "/wh", store.value(prefix + "/wh")),
          tape.param(tape_prefix + prefix + "/b", store.value(prefix + "/b"))};
}

}  // namespace mcfuse::nn
