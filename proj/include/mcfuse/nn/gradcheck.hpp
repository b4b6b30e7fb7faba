#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "mcfuse/nn/params.hpp"
#include "mcfuse/nn/tape.hpp"

namespace mcfuse::nn {

// Compares analytic gradients against central finite differences for every
// element of every parameter in the store. `f` must rebuild the (scalar)
// loss graph from the store's current values on each call and must be
// deterministic. Returns the max relative error
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline double gradient_check(const std::function<Var(Tape&)>& f,
                             ParamStore& store, double epsilon = 1e-5) {
  if (epsilon < 1e-7 || epsilon > 1e-3)
    throw CheckFailedError("gradient_check: epsilon outside [1e-7, 1e-3]");

  auto eval = [&]() {
    Tape tape;
    Var y = f(tape);
    if (y.value().size() != 1)
      throw CheckFailedError("gradient_check: f must return a scalar");
    const double v = y.value()(0, 0);
    if (!std::isfinite(v))
      throw CheckFailedError("gradient_check: non-finite loss value");
    return v;
  };

  std::map<std::string, Mat> analytic;
  {
    Tape tape;
    Var y = f(tape);
    if (y.value().size() != 1)
      throw CheckFailedError("gradient_check: f must return a scalar");
    if (!y.value().allFinite())
      throw CheckFailedError("gradient_check: non-finite loss value");
    tape.backward(y);
    analytic = tape.gradients();
    for (const auto& [name, g] : analytic)
      if (!g.allFinite())
        throw CheckFailedError("gradient_check: non-finite gradient for " +
                               name);
  }

  double max_rel = 0.0;
  for (const std::string& name : store.names()) {
    if (store.is_buffer(name)) continue;
    Mat& v = store.value(name);
    const Mat* a = analytic.count(name) ? &analytic.at(name) : nullptr;
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double keep = v(i, j);
        v(i, j) = keep + epsilon;
        const double up = eval();
        v(i, j) = keep - epsilon;
        const double down = eval();
        v(i, j) = keep;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double exact = a ? (*a)(i, j) : 0.0;
        const double denom =
            std::max({std::abs(exact), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(exact - numeric) / denom);
      }
    }
  }
  return max_rel;
}

}  // namespace mcfuse::nn
