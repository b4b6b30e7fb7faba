#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "mcfuse/mdn/mixture.hpp"
#include "mcfuse/mdn/model.hpp"
#include "mcfuse/nn/gradcheck.hpp"
#include "mcfuse/nn/params.hpp"

using namespace mcfuse;
using namespace mcfuse::mdn;
using geom::RelativePose6;

namespace {

MixtureParams random_mixture(std::mt19937_64& rng, int m,
                             double sigma_lo = 0.2, double sigma_hi = 1.5) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::uniform_real_distribution<double> mu(-2.0, 2.0);
  std::uniform_real_distribution<double> sig(sigma_lo, sigma_hi);
  MixtureParams p;
  p.alphas.resize(m);
  for (int i = 0; i < m; ++i) p.alphas[i] = u(rng);
  p.alphas /= p.alphas.sum();
  // renormalize exactly so the simplex invariant holds to 1e-12
  p.alphas[m - 1] = 1.0 - p.alphas.head(m - 1).sum();
  p.mus.resize(m, 6);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < 6; ++k) p.mus(i, k) = mu(rng);
  p.sigmas.resize(m);
  for (int i = 0; i < m; ++i) p.sigmas[i] = sig(rng);
  return p;
}

// Independent multivariate normal log-pdf via LDLT on the full covariance.
double mvn_logpdf(const Vec6& y, const Vec6& mu, const Mat6& cov) {
  Eigen::LDLT<Mat6> ldlt(cov);
  const Vec6 d = y - mu;
  const double quad = d.dot(ldlt.solve(d));
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * (6.0 * kLog2Pi + logdet + quad);
}

}  // namespace

TEST_CASE("activate_head") {
  const int m = 5;
  Vec raw = Vec::Zero(8 * m);
  SECTION("uniform weights from equal raw block") {
    const MixtureParams p = activate_head(raw);
    p.validate();
    for (int i = 0; i < m; ++i) CHECK(p.alphas[i] == Catch::Approx(0.2));
  }
  SECTION("sigma activation") {
    raw[7 * m] = 0.0;
    raw[7 * m + 1] = -50.0;
    raw[7 * m + 2] = 50.0;
    const MixtureParams p = activate_head(raw);
    CHECK(p.sigmas[0] == 1.0);
    CHECK(p.sigmas[1] == Catch::Approx(std::exp(-10.0)));
    CHECK(p.sigmas[2] == Catch::Approx(std::exp(10.0)));
  }
  SECTION("means pass through") {
    for (int i = 0; i < 6 * m; ++i) raw[m + i] = 0.1 * i;
    const MixtureParams p = activate_head(raw);
    CHECK(p.mus(0, 0) == 0.0);
    CHECK(p.mus(1, 0) == Catch::Approx(0.6));
    CHECK(p.mus(4, 5) == Catch::Approx(2.9));
  }
}

TEST_CASE("component_logdensity") {
  const Vec6 mu = Vec6::Zero();
  SECTION("at the mode with unit sigma") {
    const double v =
        component_logdensity(RelativePose6(), mu, 1.0, Normalizer::Full6D);
    CHECK(v == Catch::Approx(-3.0 * kLog2Pi).epsilon(1e-12));
    CHECK(v == Catch::Approx(-5.5134).margin(1e-3));
  }
  SECTION("unit distance costs one half") {
    RelativePose6 y(geom::Vec3(1, 0, 0), geom::Vec3::Zero());
    const double v = component_logdensity(y, mu, 1.0);
    CHECK(v == Catch::Approx(-3.0 * kLog2Pi - 0.5).epsilon(1e-12));
  }
  SECTION("1-D normalizer option") {
    const double v =
        component_logdensity(RelativePose6(), mu, 2.0, Normalizer::Scalar1D);
    CHECK(v == Catch::Approx(-std::log(2.0) - 0.5 * kLog2Pi).epsilon(1e-12));
  }
  SECTION("matches an independently coded mvn logpdf") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int it = 0; it < 50; ++it) {
      Vec6 mui, yi;
      for (int k = 0; k < 6; ++k) {
        mui[k] = u(rng);
        yi[k] = u(rng);
      }
      const double sigma = 0.2 + std::abs(u(rng));
      const double mine = component_logdensity(RelativePose6::from_vec(yi),
                                               mui, sigma, Normalizer::Full6D);
      const double oracle =
          mvn_logpdf(yi, mui, sigma * sigma * Mat6::Identity());
      CHECK(std::abs(mine - oracle) < 1e-10);
    }
  }
}

TEST_CASE("mixture_logdensity") {
  std::mt19937_64 rng(4);
  SECTION("single component collapses to the component density") {
    const MixtureParams p = random_mixture(rng, 1);
    RelativePose6 y(geom::Vec3(0.3, -0.1, 0.2), geom::Vec3(0.01, 0.0, -0.02));
    CHECK(mixture_logdensity(y, p) ==
          Catch::Approx(component_logdensity(y, p.mus.row(0), p.sigmas[0]))
              .epsilon(1e-14));
  }
  SECTION("two identical components behave like one") {
    MixtureParams p = random_mixture(rng, 1);
    MixtureParams q;
    q.alphas = Vec::Constant(2, 0.5);
    q.mus.resize(2, 6);
    q.mus.row(0) = p.mus.row(0);
    q.mus.row(1) = p.mus.row(0);
    q.sigmas = Vec::Constant(2, p.sigmas[0]);
    RelativePose6 y(geom::Vec3(0.5, 0, 0), geom::Vec3::Zero());
    CHECK(mixture_logdensity(y, q) ==
          Catch::Approx(mixture_logdensity(y, p)).epsilon(1e-14));
  }
  SECTION("tiny sigma far from all means stays finite") {
    MixtureParams p;
    p.alphas = Vec::Constant(2, 0.5);
    p.mus = Mat::Zero(2, 6);
    p.mus(1, 0) = 0.1;
    p.sigmas = Vec::Constant(2, 1e-8);
    RelativePose6 y(geom::Vec3(5, 5, 5), geom::Vec3(1, 1, 1));
    const double v = mixture_logdensity(y, p);
    CHECK(std::isfinite(v));
    CHECK(v < -1e10);  // enormous negative, no overflow
    // Against direct computation in the regime where it is representable:
    MixtureParams easy = p;
    easy.sigmas = Vec::Constant(2, 0.5);
    RelativePose6 close(geom::Vec3(0.2, 0, 0), geom::Vec3::Zero());
    const double direct = std::log(
        0.5 * std::exp(component_logdensity(close, easy.mus.row(0), 0.5)) +
        0.5 * std::exp(component_logdensity(close, easy.mus.row(1), 0.5)));
    CHECK(mixture_logdensity(close, easy) ==
          Catch::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("mixture mean and covariance") {
  std::mt19937_64 rng(5);
  SECTION("single component") {
    const MixtureParams p = random_mixture(rng, 1);
    CHECK((mixture_mean(p).vec() - p.mus.row(0).transpose()).norm() < 1e-14);
    const Mat6 cov = mixture_covariance(p);
    CHECK((cov - p.sigmas[0] * p.sigmas[0] * Mat6::Identity())
              .cwiseAbs()
              .maxCoeff() < 1e-14);
  }
  SECTION("symmetric pair cancels the mean") {
    MixtureParams p;
    p.alphas = Vec::Constant(2, 0.5);
    p.mus.resize(2, 6);
    p.mus.row(0) << 1, 0, 0, 0, 0, 0;
    p.mus.row(1) << -1, 0, 0, 0, 0, 0;
    p.sigmas = Vec::Constant(2, 1.0);
    CHECK(mixture_mean(p).vec().norm() < 1e-14);
    Mat6 expected = Mat6::Identity();
    expected(0, 0) += 1.0;
    CHECK((mixture_covariance(p) - expected).cwiseAbs().maxCoeff() < 1e-14);
  }
  SECTION("psd within 1e-10") {
    for (int it = 0; it < 20; ++it) {
      const MixtureParams p = random_mixture(rng, 4);
      const Mat6 cov = mixture_covariance(p);
      CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      Eigen::SelfAdjointEigenSolver<Mat6> es(cov);
      CHECK(es.eigenvalues().minCoeff() > -1e-10);
    }
  }
  SECTION("monte carlo moment oracle") {
    std::mt19937_64 sampler(17);
    const int n = 100000;
    for (int it = 0; it < 3; ++it) {
      const MixtureParams p = random_mixture(rng, 3);
      Eigen::Matrix<double, 6, Eigen::Dynamic> draws(6, n);
      for (int j = 0; j < n; ++j) draws.col(j) = sample(p, sampler).vec();
      const Vec6 mc_mean = draws.rowwise().mean();
      const Vec6 mean = mixture_mean(p).vec();
      const Mat6 cov = mixture_covariance(p);
      for (int k = 0; k < 6; ++k) {
        const double se = std::sqrt(cov(k, k) / n);
        CHECK(std::abs(mc_mean[k] - mean[k]) < 3.0 * se + 1e-12);
      }
      draws.colwise() -= mc_mean;
      const Mat6 mc_cov = draws * draws.transpose() / double(n);
      for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b) {
          // rough standard error for a covariance entry
          const double se =
              std::sqrt((cov(a, a) * cov(b, b) + cov(a, b) * cov(a, b)) / n);
          CHECK(std::abs(mc_cov(a, b) - cov(a, b)) < 3.0 * se + 1e-10);
        }
    }
  }
}

TEST_CASE("mixture sampling") {
  SECTION("deterministic limit") {
    MixtureParams p;
    p.alphas = Vec::Zero(2);
    p.alphas[0] = 1.0;
    p.mus = Mat::Zero(2, 6);
    p.mus.row(0) << 1, 2, 3, 0.1, 0.2, 0.3;
    p.sigmas = Vec::Constant(2, 1e-12);
    const RelativePose6 s = sample(p, std::uint64_t{42});
    CHECK((s.vec() - p.mus.row(0).transpose()).norm() < 1e-9);
  }
  SECTION("same seed, same draw") {
    std::mt19937_64 rng(6);
    const MixtureParams p = random_mixture(rng, 3);
    CHECK(
        (sample(p, std::uint64_t{7}).vec() - sample(p, std::uint64_t{7}).vec())
            .norm() == 0.0);
  }
  SECTION("component frequencies match the weights") {
    MixtureParams p;
    p.alphas.resize(3);
    p.alphas << 0.6, 0.3, 0.1;
    p.mus = Mat::Zero(3, 6);
    p.mus(0, 0) = -10.0;
    p.mus(1, 0) = 0.0;
    p.mus(2, 0) = 10.0;  // separated so the draw identifies the component
    p.sigmas = Vec::Constant(3, 0.1);
    const int n = 100000;
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    std::mt19937_64 sampler(101);
    for (int i = 0; i < n; ++i) {
      const double x = sample(p, sampler).rho.x();
      counts[x < -5 ? 0 : (x < 5 ? 1 : 2)] += 1.0;
    }
    for (int i = 0; i < 3; ++i) {
      const double se = std::sqrt(p.alphas[i] * (1 - p.alphas[i]) / n);
      CHECK(std::abs(counts[i] / n - p.alphas[i]) < 3.0 * se);
    }
  }
}

TEST_CASE("mixture density integrates to one", "[slow]") {
  std::mt19937_64 rng(12);
  for (int it = 0; it < 3; ++it) {
    const MixtureParams p = random_mixture(rng, 3, 0.05, 0.3);  // low sigma
    MixtureParams proposal = p;
    proposal.sigmas = p.sigmas * 3.0;  // heavier proposal covers the target
    const int n = 1000000;
    std::mt19937_64 sampler(900 + it);
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const RelativePose6 x = sample(proposal, sampler);
      acc +=
          std::exp(mixture_logdensity(x, p) - mixture_logdensity(x, proposal));
    }
    CHECK(std::abs(acc / n - 1.0) < 0.02);
  }
}

TEST_CASE("nll graph") {
  SECTION("forced mode value") {
    // alpha = 1 (single component), mu = y, sigma = 1 -> NLL = 3 log 2pi.
    Tape tape;
    Mat targets(6, 3);
    targets.setRandom();
    Mat raw = Mat::Zero(8, 3);
    raw.middleRows(1, 6) = targets;  // M = 1 layout: [alpha, mu x6, sigma]
    Var nll = mixture_nll_graph(tape, tape.constant(raw), targets, 1);
    CHECK(nll.value()(0, 0) == Catch::Approx(3.0 * kLog2Pi).epsilon(1e-12));
    CHECK(nll.value()(0, 0) == Catch::Approx(5.5134).margin(1e-3));
  }
  SECTION("gradient matches finite differences") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n01(0.0, 1.0);
    const int m = 3, b = 4, d = 5;
    nn::ParamStore store(33);
    store.create_xavier("w", 8 * m, d);
    store.create("b", 8 * m, 1);
    Mat x(d, b), y(6, b);
    for (int j = 0; j < b; ++j) {
      for (int i = 0; i < d; ++i) x(i, j) = n01(rng);
      for (int i = 0; i < 6; ++i) y(i, j) = 0.5 * n01(rng);
    }
    auto f = [&](Tape& t) {
      Var raw = nn::dense(t.constant(x), t.param("w", store.value("w")),
                          t.param("b", store.value("b")));
      return mixture_nll_graph(t, raw, y, m);
    };
    CHECK(nn::gradient_check(f, store) < 1e-4);
  }
  SECTION("training beats the best single Gaussian on a bimodal target") {
    // Fixed 2-component ground truth, well separated on the first axis.
    MixtureParams truth;
    truth.alphas = Vec::Constant(2, 0.5);
    truth.mus = Mat::Zero(2, 6);
    truth.mus(0, 0) = -2.0;
    truth.mus(1, 0) = 2.0;
    truth.sigmas = Vec::Constant(2, 0.3);

    const int n = 512;
    Mat y(6, n);
    std::mt19937_64 sampler(55);
    for (int j = 0; j < n; ++j) y.col(j) = sample(truth, sampler).vec();

    // Single best-fit isotropic Gaussian (closed-form MLE) as the oracle.
    const Vec6 mean = y.rowwise().mean();
    const double var =
        (y.colwise() - mean).squaredNorm() / static_cast<double>(6 * n);
    const double single_nll = 3.0 * kLog2Pi + 3.0 * std::log(var) + 3.0;

    // A learnable constant mixture: head driven by a constant scalar input.
    const int m = 2;
    nn::ParamStore store(77);
    store.create_xavier("w", 8 * m, 1);
    store.create("b", 8 * m, 1);
    const Mat ones = Mat::Ones(1, n);
    double nll = 0.0;
    for (int step = 0; step < 300; ++step) {
      Tape tape;
      Var raw =
          nn::dense(tape.constant(ones), tape.param("w", store.value("w")),
                    tape.param("b", store.value("b")));
      Var loss = mixture_nll_graph(tape, raw, y, m);
      tape.backward(loss);
      nll = loss.value()(0, 0);
      nn::adam_step(store, tape.gradients(), 0.05);
    }
    CHECK(nll < single_nll);
  }
}

TEST_CASE("mdn model plumbing") {
  MdnConfig cfg;
  cfg.components = 2;
  cfg.feature_dim = 4;
  cfg.hidden = 6;
  cfg.window = 3;
  MdnModel model(cfg, 99);

  Mat features(7, 4);
  features.setRandom();

  SECTION("windows are causal and left-padded") {
    const auto steps = MdnModel::window_steps(features, 3);
    REQUIRE(steps.size() == 3);
    CHECK(steps[0].cols() == 7);
    // First step: all slots clamp to frame 0.
    for (int k = 0; k < 3; ++k)
      CHECK((steps[k].col(0) - features.row(0).transpose()).norm() == 0.0);
    // Interior step t=4 sees frames 2,3,4.
    for (int k = 0; k < 3; ++k)
      CHECK((steps[k].col(4) - features.row(2 + k).transpose()).norm() == 0.0);
  }
  SECTION("inference emits one valid mixture per step") {
    const auto mixtures = model.infer_sequence(features);
    REQUIRE(mixtures.size() == 7);
    for (const auto& p : mixtures) p.validate();
    const auto again = model.infer_sequence(features);
    CHECK((again[3].flat() - mixtures[3].flat()).norm() == 0.0);
  }
  SECTION("full mdn nll graph passes the gradient check") {
    MdnConfig tiny;
    tiny.components = 2;
    tiny.feature_dim = 3;
    tiny.hidden = 3;
    tiny.window = 2;
    MdnModel small(tiny, 5);
    Mat f(4, 3);
    f.setRandom();
    Mat targets(6, 4);
    targets.setRandom();
    auto fn = [&](Tape& t) {
      return small.nll_graph(t, MdnModel::window_steps(f, tiny.window),
                             targets);
    };
    CHECK(nn::gradient_check(fn, small.params()) < 1e-4);
  }
}

TEST_CASE("mixture serialization round trips") {
  std::mt19937_64 rng(31);
  std::vector<MixtureParams> seq;
  for (int t = 0; t < 5; ++t) seq.push_back(random_mixture(rng, 3));

  SECTION("csv") {
    save_mixture_sequence_csv("mix_test.csv", seq, "config=cafe");
    const auto back = load_mixture_sequence_csv("mix_test.csv", 3);
    REQUIRE(back.size() == seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t)
      CHECK((back[t].flat() - seq[t].flat()).norm() == 0.0);
    std::remove("mix_test.csv");
  }
  SECTION("matrix embedding") {
    const Mat m = mixtures_to_matrix(seq);
    CHECK(m.rows() == 5);
    CHECK(m.cols() == 24);
    const auto back = mixtures_from_matrix(m);
    for (std::size_t t = 0; t < seq.size(); ++t)
      CHECK((back[t].flat() - seq[t].flat()).norm() == 0.0);
  }
}
