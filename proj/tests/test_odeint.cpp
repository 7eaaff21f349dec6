#include <doctest.h>

#include <cmath>

#include "dualflow/errors.hpp"
#include "dualflow/odeint.hpp"
#include "support/oracles.hpp"

using namespace dualflow;
namespace oracle = dualflow::testing;

namespace {
SolverConfig euler_cfg(int steps, double t0 = 0.0, double t1 = 1.0) {
  SolverConfig cfg;
  cfg.method = SolverConfig::Method::kEuler;
  cfg.steps = steps;
  cfg.t0 = t0;
  cfg.t1 = t1;
  return cfg;
}

SolverConfig dopri_cfg(double atol, double rtol, double t0 = 0.0, double t1 = 1.0) {
  SolverConfig cfg;
  cfg.method = SolverConfig::Method::kDopri5;
  cfg.atol = atol;
  cfg.rtol = rtol;
  cfg.t0 = t0;
  cfg.t1 = t1;
  return cfg;
}
}  // namespace

TEST_CASE("euler closed forms") {
  // Constant field is integrated exactly.
  auto constant = [](double, const Tensor& x) { return Tensor::full(x.shape(), 1.0); };
  OdeResult r = solve(constant, Tensor({1, 2}, {0.0, 0.0}), euler_cfg(4));
  CHECK(r.x.at(0, 0) == doctest::Approx(1.0));
  CHECK(r.x.at(0, 1) == doctest::Approx(1.0));
  CHECK(r.nfe == 4);

  // dx/dt = x with 4 steps: (1 + 1/4)^4.
  auto linear = [](double, const Tensor& x) { return x; };
  r = solve(linear, Tensor({1, 1}, {1.0}), euler_cfg(4));
  CHECK(r.x.at(0, 0) == doctest::Approx(2.44140625).epsilon(1e-12));
}

TEST_CASE("euler converges to e at first order") {
  auto linear = [](double, const Tensor& x) { return x; };
  double prev_err = 0.0;
  for (int n : {4, 8, 16, 32, 64}) {
    OdeResult r = solve(linear, Tensor({1, 1}, {1.0}), euler_cfg(n));
    const double err = std::numbers::e - r.x.at(0, 0);
    if (n > 4) {
      const double ratio = prev_err / err;
      CHECK(ratio > 1.8);
      CHECK(ratio < 2.2);
    }
    prev_err = err;
  }
}

TEST_CASE("dopri5 matches the exponential decay closed form") {
  auto decay = [](double, const Tensor& x) { return neg(x); };
  OdeResult r = solve(decay, Tensor({1, 1}, {1.0}), dopri_cfg(1e-6, 1e-6));
  CHECK(std::abs(r.x.at(0, 0) - std::exp(-1.0)) < 1e-5);
}

TEST_CASE("dopri5 nfe accounting: one init eval plus six per attempt") {
  long calls = 0;
  auto rhs = [&](double, const Tensor& x) {
    ++calls;
    return neg(x);
  };
  OdeResult r = integrate(rhs, Tensor({1, 1}, {1.0}), dopri_cfg(1e-8, 1e-8));
  CHECK(r.nfe == calls);
  CHECK((r.nfe - 1) % 6 == 0);

  calls = 0;
  OdeResult re = integrate(rhs, Tensor({1, 1}, {1.0}), euler_cfg(7));
  CHECK(re.nfe == 7);
  CHECK(re.nfe == calls);
}

TEST_CASE("dopri5 reports max_steps exhaustion with the last t") {
  SolverConfig cfg = dopri_cfg(1e-12, 1e-12);
  cfg.max_steps = 3;
  auto stiff = [](double, const Tensor& x) { return scale(x, -500.0); };
  try {
    solve(stiff, Tensor({1, 1}, {1.0}), cfg);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("max_steps") != std::string::npos);
    CHECK(msg.find("t=") != std::string::npos);
  }
}

TEST_CASE("non-finite field output aborts the solve") {
  auto bad = [](double t, const Tensor& x) {
    return t > 0.4 ? divide(x, Tensor::zeros(x.shape())) : x;
  };
  CHECK_THROWS_AS(solve(bad, Tensor({1, 1}, {1.0}), euler_cfg(4)), NumericalError);
}

TEST_CASE("solve_with_logdet on the affine flow") {
  for (double a : {-1.0, 0.5, 1.0}) {
    for (std::size_t d : {std::size_t{1}, std::size_t{3}}) {
      oracle::AffineField field(a, d);
      Tensor x0 = Tensor::full({2, d}, 0.8);
      AugmentedState end = solve_with_logdet(field, x0, dopri_cfg(1e-9, 1e-9),
                                             TraceEstimator::exact());
      for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < d; ++j)
          CHECK(end.x.at(i, j) == doctest::Approx(0.8 * std::exp(a)).epsilon(1e-7));
        CHECK(end.delta_logp[i] ==
              doctest::Approx(-a * static_cast<double>(d)).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("solve_with_logdet: zero field is the identity flow") {
  oracle::AffineField field(0.0, 2);
  Tensor x0({3, 2}, {1, 2, 3, 4, 5, 6});
  AugmentedState end =
      solve_with_logdet(field, x0, euler_cfg(4), TraceEstimator::exact());
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(end.x[i] == doctest::Approx(x0[i]));
  for (std::size_t i = 0; i < 3; ++i) CHECK(end.delta_logp[i] == doctest::Approx(0.0));
}

TEST_CASE("round trip: delta_logp cancels and x returns") {
  Rng rng(2);
  Tensor a = randn({3, 3}, rng);
  oracle::LinearField field(a);
  Tensor x0 = randn({4, 3}, rng);

  SolverConfig tight = dopri_cfg(1e-10, 1e-10);
  AugmentedState fwd = solve_with_logdet(field, x0, tight, TraceEstimator::exact());
  AugmentedState back = solve_with_logdet(field, fwd.x, tight.with_direction(1.0, 0.0),
                                          TraceEstimator::exact());
  for (std::size_t i = 0; i < x0.size(); ++i)
    CHECK(std::abs(back.x[i] - x0[i]) < 1e-6);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::abs(fwd.delta_logp[i] + back.delta_logp[i]) < 1e-6);

  // Exact trace on a linear field: delta = -Tr(A) (t1 - t0).
  double tr = 0.0;
  for (std::size_t j = 0; j < 3; ++j) tr += a.at(j, j);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::abs(fwd.delta_logp[i] + tr) < 1e-8);
}

TEST_CASE("time reversal of a plain solve recovers the start") {
  Rng rng(6);
  Tensor a = randn({2, 2}, rng);
  oracle::LinearField field(a);
  Tensor x0 = randn({5, 2}, rng);
  SolverConfig cfg = dopri_cfg(1e-8, 1e-8);
  Tensor fwd = solve(field, x0, cfg).x;
  Tensor back = solve(field, fwd, cfg.with_direction(1.0, 0.0)).x;
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(std::abs(back[i] - x0[i]) < 1e-7);
}

TEST_CASE("push_forward_sample: identity flow returns prior samples, n=0 is empty") {
  Rng init_rng(0);
  MlpVectorField field(2, {8}, 4, init_rng);  // zero final layer => identity flow
  GaussianPrior prior(2);
  prior.init_moments(Tensor({2}, {3.0, -1.0}), Tensor({2}, {0.5, 2.0}));

  Tensor samples = push_forward_sample(field, prior, 6, euler_cfg(4), 42);
  Rng expect_rng(42);
  Tensor expected = prior.sample(6, expect_rng);
  for (std::size_t i = 0; i < samples.size(); ++i)
    CHECK(samples[i] == doctest::Approx(expected[i]));

  CHECK(push_forward_sample(field, prior, 0, euler_cfg(4), 42).empty());
}

TEST_CASE("solver config validation") {
  SolverConfig bad = euler_cfg(0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  SolverConfig bad2 = dopri_cfg(-1.0, 1e-2);
  CHECK_THROWS_AS(bad2.validate(), ConfigError);
  CHECK(euler_cfg(4).tag() == "F");
  CHECK(dopri_cfg(1e-1, 1e-2).tag() == "V");
}
