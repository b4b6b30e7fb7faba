#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <random>

#include "mcfuse/nn/checkpoint.hpp"
#include "mcfuse/nn/gradcheck.hpp"
#include "mcfuse/nn/layers.hpp"
#include "mcfuse/nn/params.hpp"
#include "mcfuse/nn/tape.hpp"

using namespace mcfuse;
using namespace mcfuse::nn;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
               double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

}  // namespace

TEST_CASE("dense layer basics") {
  Tape tape;
  Mat x(3, 2);
  x << 1, 4, 2, 5, 3, 6;

  SECTION("identity weights, zero bias") {
    Var v = dense(tape.constant(x), tape.constant(Mat::Identity(3, 3)),
                  tape.constant(Mat::Zero(3, 1)));
    CHECK(v.value().isApprox(x));
  }
  SECTION("zero weights pass the bias through") {
    Mat b(2, 1);
    b << 7, -1;
    Var v = dense(tape.constant(x), tape.constant(Mat::Zero(2, 3)),
                  tape.constant(b));
    for (int j = 0; j < 2; ++j) {
      CHECK(v.value()(0, j) == 7.0);
      CHECK(v.value()(1, j) == -1.0);
    }
  }
  SECTION("shape mismatch") {
    CHECK_THROWS_AS(dense(tape.constant(x), tape.constant(Mat::Zero(2, 4)),
                          tape.constant(Mat::Zero(2, 1))),
                    ShapeError);
  }
  SECTION("gradient of sum(dense(x)) matches finite differences") {
    ParamStore store(3);
    store.create_xavier("w", 4, 3);
    store.create_xavier("b", 4, 1);
    auto f = [&](Tape& t) {
      return sum_all(dense(t.constant(x), t.param("w", store.value("w")),
                           t.param("b", store.value("b"))));
    };
    CHECK(gradient_check(f, store) < 1e-6);
  }
}

TEST_CASE("relu and dropout") {
  Tape tape;
  Mat x(1, 2);
  x << -1, 2;
  Var y = relu(tape.constant(x));
  CHECK(y.value()(0, 0) == 0.0);
  CHECK(y.value()(0, 1) == 2.0);

  SECTION("eval mode dropout is the exact identity") {
    std::mt19937_64 rng(0);
    Var v = tape.constant(x);
    Var d = dropout(v, 0.5, false, rng);
    CHECK(d.index() == v.index());
  }
  SECTION("training dropout is unbiased") {
    std::mt19937_64 rng(42);
    const int n = 100000;
    Tape t2;
    Var one = t2.constant(Mat::Ones(1, n));
    Var d = dropout(one, 0.3, true, rng);
    const double mean = d.value().sum() / n;
    // Var of one inverted-dropout draw of a unit input: p/(1-p), p = 0.3.
    const double se = std::sqrt(0.3 / 0.7 / n);
    CHECK(std::abs(mean - 1.0) < 3 * se);
  }
  SECTION("invalid rate") {
    std::mt19937_64 rng(0);
    CHECK_THROWS_AS(dropout(tape.constant(x), 1.0, true, rng), ShapeError);
  }
}

TEST_CASE("lstm cell") {
  const Eigen::Index h = 3, d = 2, b = 2;
  SECTION("all-zero parameters give zero hidden state") {
    Tape tape;
    LstmWeights w{tape.constant(Mat::Zero(4 * h, d)),
                  tape.constant(Mat::Zero(4 * h, h)),
                  tape.constant(Mat::Zero(4 * h, 1))};
    std::mt19937_64 rng(1);
    LstmState s = lstm_cell(tape.constant(random_mat(d, b, rng)),
                            lstm_zero_state(tape, h, b), w);
    CHECK(s.h.value().cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("saturated forget gate preserves the cell state") {
    Tape tape;
    Mat bias = Mat::Zero(4 * h, 1);
    bias.block(h, 0, h, 1).setConstant(50.0);   // forget ~ 1
    bias.block(0, 0, h, 1).setConstant(-50.0);  // input ~ 0
    LstmWeights w{tape.constant(Mat::Zero(4 * h, d)),
                  tape.constant(Mat::Zero(4 * h, h)),
                  tape.constant(bias)};
    std::mt19937_64 rng(2);
    Mat c0 = random_mat(h, b, rng);
    LstmState s0{tape.constant(Mat::Zero(h, b)), tape.constant(c0)};
    LstmState s = lstm_cell(tape.constant(random_mat(d, b, rng)), s0, w);
    CHECK((s.c.value() - c0).cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("gradients through all gate weights match finite differences") {
    std::mt19937_64 rng(3);
    ParamStore store(7);
    create_lstm_params(store, "cell", d, h);
    const Mat x = random_mat(d, b, rng);
    const Mat target = random_mat(h, b, rng);
    auto f = [&](Tape& t) {
      LstmWeights w = lstm_params(t, store, "cell");
      LstmState s = lstm_cell(t.constant(x), lstm_zero_state(t, h, b), w);
      s = lstm_cell(t.constant(x), s, w);  // two steps to exercise wh
      return mean_all(square(sub(s.h, t.constant(target))));
    };
    CHECK(gradient_check(f, store) < 1e-4);
  }
}

TEST_CASE("bilstm window") {
  const Eigen::Index h = 4, d = 3, b = 2;
  std::mt19937_64 rng(11);
  ParamStore store(13);
  create_lstm_params(store, "fwd", d, h);
  create_lstm_params(store, "bwd", d, h);

  SECTION("single-position window") {
    Tape tape;
    const Mat x = random_mat(d, b, rng);
    auto out =
        bilstm_window({tape.constant(x)}, lstm_params(tape, store, "fwd"),
                      lstm_params(tape, store, "bwd"), h);
    REQUIRE(out.size() == 1);
    CHECK(out[0].rows() == 2 * h);
    // Both directions see the same single input from zero state.
    Tape t2;
    LstmState f = lstm_cell(t2.constant(x), lstm_zero_state(t2, h, b),
                            lstm_params(t2, store, "fwd"));
    CHECK(out[0].value().topRows(h).isApprox(f.h.value(), 1e-12));
  }
  SECTION("default window shape is (5, 2H)") {
    Tape tape;
    std::vector<Var> xs;
    for (int k = 0; k < 5; ++k)
      xs.push_back(tape.constant(random_mat(d, b, rng)));
    auto out = bilstm_window(xs, lstm_params(tape, store, "fwd"),
                             lstm_params(tape, store, "bwd"), h);
    REQUIRE(out.size() == 5);
    for (const Var& o : out) {
      CHECK(o.rows() == 2 * h);
      CHECK(o.cols() == b);
    }
  }
  SECTION("reversing input swaps direction roles under swapped weights") {
    const int w = 5;
    std::vector<Mat> xs;
    for (int k = 0; k < w; ++k) xs.push_back(random_mat(d, b, rng));

    Tape t1;
    std::vector<Var> v1;
    for (const Mat& m : xs) v1.push_back(t1.constant(m));
    auto out = bilstm_window(v1, lstm_params(t1, store, "fwd"),
                             lstm_params(t1, store, "bwd"), h);

    Tape t2;
    std::vector<Var> v2;
    for (int k = w - 1; k >= 0; --k) v2.push_back(t2.constant(xs[k]));
    // Swap which weights drive which direction.
    auto mirrored = bilstm_window(v2, lstm_params(t2, store, "bwd"),
                                  lstm_params(t2, store, "fwd"), h);

    for (int k = 0; k < w; ++k) {
      const Mat& a = out[k].value();
      const Mat& m = mirrored[w - 1 - k].value();
      CHECK((a.topRows(h) - m.bottomRows(h)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((a.bottomRows(h) - m.topRows(h)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("empty window is rejected") {
    Tape tape;
    CHECK_THROWS_AS(bilstm_window({}, lstm_params(tape, store, "fwd"),
                                  lstm_params(tape, store, "bwd"), h),
                    ShapeError);
  }
}

TEST_CASE("adam") {
  SECTION("zero gradient leaves parameters unchanged") {
    ParamStore store(0);
    Mat& w = store.create("w", 2, 2);
    w << 1, 2, 3, 4;
    const Mat before = w;
    adam_step(store, {{"w", Mat::Zero(2, 2)}}, 1e-3);
    CHECK(store.value("w").isApprox(before));
    CHECK(store.step() == 1);
  }
  SECTION("first step moves by ~ -lr * sign(g)") {
    ParamStore store(0);
    Mat& w = store.create("w", 1, 3);
    w << 0.0, 0.0, 0.0;
    Mat g(1, 3);
    g << 2.5, -0.3, 1e-4;
    adam_step(store, {{"w", g}}, 0.01);
    for (int i = 0; i < 3; ++i) {
      const double expect = -0.01 * (g(0, i) > 0 ? 1.0 : -1.0);
      CHECK(std::abs(store.value("w")(0, i) - expect) < 1e-4);
    }
  }
  SECTION("converges on a convex quadratic") {
    ParamStore store(0);
    store.create("w", 1, 1);
    for (int stepi = 0; stepi < 200; ++stepi) {
      const double w = store.value("w")(0, 0);
      Mat g(1, 1);
      g << 2.0 * (w - 3.0);
      adam_step(store, {{"w", g}}, 0.1);
    }
    CHECK(std::abs(store.value("w")(0, 0) - 3.0) < 1e-2);
  }
  SECTION("non-finite gradient raises") {
    ParamStore store(0);
    store.create("w", 1, 1);
    Mat g(1, 1);
    g << std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(store, {{"w", g}}, 1e-3), TrainingDivergedError);
  }
}

TEST_CASE("plateau scheduler") {
  SECTION("strictly decreasing losses keep the rate") {
    PlateauScheduler sch(1e-3);
    double lr = 1e-3;
    for (int i = 0; i < 30; ++i) lr = sch.observe(1.0 / (i + 1));
    CHECK(lr == 1e-3);
  }
  SECTION("decays after the patience runs out") {
    PlateauScheduler sch(1.0);
    sch.observe(1.0);  // establishes the best
    double lr = 1.0;
    for (int i = 0; i < 9; ++i) lr = sch.observe(2.0);
    CHECK(lr == Catch::Approx(0.7));
    for (int i = 9; i < 17; ++i) lr = sch.observe(2.0);
    CHECK(lr == Catch::Approx(0.49));
  }
}

TEST_CASE("gradient_check is exact for linear functions") {
  std::mt19937_64 rng(5);
  ParamStore store(9);
  store.create_xavier("w", 3, 4);
  const Mat x = random_mat(4, 2, rng);
  auto f = [&](Tape& t) {
    return sum_all(matmul(t.param("w", store.value("w")), t.constant(x)));
  };
  // No truncation error for a linear map, so a large epsilon leaves only
  // rounding noise.
  CHECK(gradient_check(f, store, 1e-3) < 1e-10);
  CHECK_THROWS_AS(gradient_check(f, store, 1e-2), CheckFailedError);
}

TEST_CASE("every op passes randomized gradient checks") {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::uniform_int_distribution<int> dim(1, 4);
    const Eigen::Index m = dim(rng), b = dim(rng);
    ParamStore store(seed);
    store.create("x", m, b);
    store.value("x") = random_mat(m, b, rng).array().abs() + 0.5;  // log-safe
    store.create("y", m, b);
    store.value("y") = random_mat(m, b, rng);

    auto f = [&](Tape& t) {
      Var x = t.param("x", store.value("x"));
      Var y = t.param("y", store.value("y"));
      Var a = add(mul(tanh_of(x), sigmoid(y)), scale(square(y), 0.1));
      Var c = add(log_of(x), exp_of(clamp(y, -2.0, 2.0)));
      Var lse = logsumexp_colwise(add(a, c));
      Var sm = colwise_sum(softmax_colwise(sub(a, c)));
      Var r = sub_row_broadcast(add(a, c), lse);
      Var pieces = vcat({relu(r), scale(r, 0.3)});
      return mean_all(add(colwise_sum(pieces), sm));
    };
    INFO("seed " << seed);
    CHECK(gradient_check(f, store) < 1e-4);
  }
}

TEST_CASE("backward accumulates over reused subexpressions") {
  // d/dx of (x*x + x) at x=3 must be 2x+1 = 7 exactly.
  Tape tape;
  Var x = tape.param("x", Mat::Constant(1, 1, 3.0));
  Var y = add(mul(x, x), x);
  tape.backward(y);
  CHECK(tape.gradients().at("x")(0, 0) == 7.0);
}

TEST_CASE("backward is deterministic for a fixed build order") {
  auto run = [] {
    std::mt19937_64 rng(77);
    Tape tape;
    Mat w0(5, 5), x0(5, 3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 5; ++i) w0(i, j) = n(rng);
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 5; ++i) x0(i, j) = n(rng);
    Var w = tape.param("w", w0);
    Var x = tape.constant(x0);
    Var loss = mean_all(square(tanh_of(matmul(w, x))));
    tape.backward(loss);
    return tape.gradients().at("w");
  };
  const Mat a = run(), b = run();
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint round trip and validation") {
  ParamStore store(1);
  store.create_xavier("layer/w", 3, 4);
  store.create_xavier("layer/b", 3, 1);
  const Mat w = store.value("layer/w");
  const std::string path = "ckpt_test.bin";
  save_checkpoint(path, store, 0xabcdef12u);

  ParamStore fresh(2);
  fresh.create("layer/w", 3, 4);
  fresh.create("layer/b", 3, 1);
  const std::uint64_t hash = load_checkpoint(path, fresh);
  CHECK(hash == 0xabcdef12u);
  CHECK(fresh.value("layer/w").isApprox(w));

  SECTION("shape mismatch is rejected") {
    ParamStore wrong(3);
    wrong.create("layer/w", 4, 3);
    wrong.create("layer/b", 3, 1);
    CHECK_THROWS_AS(load_checkpoint(path, wrong), ShapeError);
  }
  SECTION("missing names are rejected") {
    ParamStore extra(4);
    extra.create("layer/w", 3, 4);
    extra.create("layer/b", 3, 1);
    extra.create("other", 1, 1);
    CHECK_THROWS_AS(load_checkpoint(path, extra), IoError);
  }
  SECTION("unknown names are rejected") {
    ParamStore fewer(5);
    fewer.create("layer/w", 3, 4);
    CHECK_THROWS_AS(load_checkpoint(path, fewer), IoError);
  }
  std::remove(path.c_str());
}
