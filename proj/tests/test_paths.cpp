#include <doctest.h>

#include <cmath>

#include "dualflow/errors.hpp"
#include "dualflow/paths.hpp"

using namespace dualflow;

namespace {
const Tensor kX0({2}, {0.0, 0.0});
const Tensor kX1({2}, {2.0, 4.0});
}  // namespace

TEST_CASE("mu/sigma rows match their closed forms") {
  PathSpec fm{PathKind::kFlowMatching, 0.0, 0.1};
  PathPoint p = mu_sigma(fm, 1.0, Tensor(), kX1);
  CHECK(p.mu[0] == doctest::Approx(2.0));
  CHECK(p.mu[1] == doctest::Approx(4.0));
  CHECK(p.sigma == doctest::Approx(0.0));

  PathSpec rect{PathKind::kRectified};
  p = mu_sigma(rect, 0.5, kX0, kX1);
  CHECK(p.mu[0] == doctest::Approx(1.0));
  CHECK(p.mu[1] == doctest::Approx(2.0));
  CHECK(p.sigma == 0.0);

  PathSpec vp{PathKind::kVpTrig};
  p = mu_sigma(vp, 0.0, kX0, kX1);
  CHECK(p.mu[0] == doctest::Approx(kX0[0]));
  p = mu_sigma(vp, 1.0, kX0, kX1);
  CHECK(p.mu[0] == doctest::Approx(kX1[0]));
  CHECK(p.mu[1] == doctest::Approx(kX1[1]));

  CHECK_THROWS_AS(mu_sigma(rect, 1.2, kX0, kX1), Error);
  CHECK_THROWS_AS(mu_sigma(rect, 0.5, Tensor(), kX1), ShapeError);
}

TEST_CASE("path derivatives match finite differences") {
  const double h = 1e-6;
  for (PathKind kind :
       {PathKind::kFlowMatching, PathKind::kRectified, PathKind::kVpTrig, PathKind::kIcfm}) {
    PathSpec spec{kind, 0.01, 0.1};
    for (double t : {0.1, 0.45, 0.9}) {
      PathPoint mid = mu_sigma(spec, t, kX0, kX1);
      PathPoint up = mu_sigma(spec, t + h, kX0, kX1);
      PathPoint down = mu_sigma(spec, t - h, kX0, kX1);
      for (std::size_t j = 0; j < 2; ++j) {
        const double fd = (up.mu[j] - down.mu[j]) / (2.0 * h);
        CHECK(std::abs(mid.dmu[j] - fd) < 1e-8);
      }
      const double fd_sigma = (up.sigma - down.sigma) / (2.0 * h);
      CHECK(std::abs(mid.dsigma - fd_sigma) < 1e-8);
    }
  }
}

TEST_CASE("sample_xt: zero width is exact, constant width matches Monte Carlo") {
  PathSpec rect{PathKind::kRectified};
  Rng rng(0);
  Tensor xt = sample_xt(rect, 0.25, kX0, kX1, rng);
  CHECK(xt[0] == doctest::Approx(0.5));
  CHECK(xt[1] == doctest::Approx(1.0));

  PathSpec icfm{PathKind::kIcfm, 0.01, 0.1};
  const std::size_t n = 100000;
  double sum0 = 0.0, sumsq0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor draw = sample_xt(icfm, 0.5, kX0, kX1, rng);
    sum0 += draw[0];
    sumsq0 += draw[0] * draw[0];
  }
  const double mean0 = sum0 / n;
  const double std0 = std::sqrt(sumsq0 / n - mean0 * mean0);
  CHECK(std::abs(std0 - 0.1) < 0.002);

  // FlowMatching at t=0 is the standard normal regardless of z.
  PathSpec fm{PathKind::kFlowMatching, 0.0, 0.1};
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor draw = sample_xt(fm, 0.0, Tensor(), kX1, rng);
    sum += draw[1];
    sumsq += draw[1] * draw[1];
  }
  const double m = sum / n;
  const double s = std::sqrt(sumsq / n - m * m);
  CHECK(std::abs(m) < 0.02);
  CHECK(std::abs(s - 1.0) < 0.02);
}

TEST_CASE("conditional field closed forms") {
  PathSpec rect{PathKind::kRectified};
  Tensor x1({2}, {1.0, 2.0});
  for (double t : {0.0, 0.3, 0.99}) {
    Tensor u = cond_vector_field(rect, t, kX0, kX0, x1);
    CHECK(u[0] == doctest::Approx(1.0));
    CHECK(u[1] == doctest::Approx(2.0));
  }

  // FlowMatching with sigma_min=0 at t=0: u = x1 - x.
  PathSpec fm{PathKind::kFlowMatching, 0.0, 0.1};
  Tensor x({2}, {1.0, 0.0});
  Tensor tgt({2}, {3.0, 0.0});
  Tensor u = cond_vector_field(fm, 0.0, x, Tensor(), tgt);
  CHECK(u[0] == doctest::Approx(2.0));
  CHECK(u[1] == doctest::Approx(0.0));

  // Icfm has sigma' = 0: u = x1 - x0 for any x.
  PathSpec icfm{PathKind::kIcfm, 0.01, 0.1};
  Tensor any({2}, {-5.0, 7.0});
  u = cond_vector_field(icfm, 0.7, any, kX0, kX1);
  CHECK(u[0] == doctest::Approx(2.0));
  CHECK(u[1] == doctest::Approx(4.0));

  // The isolated sigma=0 point of the FlowMatching row is rejected.
  CHECK_THROWS_AS(cond_vector_field(fm, 1.0, x, Tensor(), tgt), NumericalError);
}

TEST_CASE("one-step advancement under the conditional field is O(h^2)") {
  Rng rng(4);
  const double t = 0.4;
  for (PathKind kind :
       {PathKind::kFlowMatching, PathKind::kRectified, PathKind::kVpTrig, PathKind::kIcfm}) {
    CAPTURE(to_string(kind));
    PathSpec spec{kind, 0.01, 0.1};
    const Tensor& x0 = kX0;
    auto x_of = [&](double tt, double eps0, double eps1) {
      PathPoint p = mu_sigma(spec, tt, x0, kX1);
      Tensor out({2});
      out[0] = p.mu[0] + p.sigma * eps0;
      out[1] = p.mu[1] + p.sigma * eps1;
      return out;
    };
    const double e0 = rng.normal(), e1 = rng.normal();
    double errs[2];
    const double hs[2] = {1e-2, 1e-3};
    for (int k = 0; k < 2; ++k) {
      const double h = hs[k];
      Tensor xt = x_of(t, e0, e1);
      Tensor u = cond_vector_field(spec, t, xt, x0, kX1);
      Tensor euler = add(xt, scale(u, h));
      Tensor exact = x_of(t + h, e0, e1);
      errs[k] = l2_norm(sub(euler, exact));
    }
    if (errs[0] < 1e-12) {
      CHECK(errs[1] < 1e-12);  // linear-in-t paths advance exactly
    } else {
      const double ratio = errs[0] / errs[1];
      CHECK(ratio > 50.0);
      CHECK(ratio < 200.0);
    }
  }
}
