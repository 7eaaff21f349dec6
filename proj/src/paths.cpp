#include "dualflow/paths.hpp"

#include <cmath>
#include <numbers>

#include "dualflow/errors.hpp"

namespace dualflow {

namespace {

void check_t(double t) {
  if (t < 0.0 || t > 1.0)
    throw Error("path: t=" + std::to_string(t) + " outside [0,1]");
}

struct Coeffs {
  // mu_t = a0 * x0 + a1 * x1, and the same split for the derivative.
  double a0, a1, da0, da1;
  double sigma, dsigma;
};

Coeffs coeffs_at(const PathSpec& spec, double t) {
  const double half_pi = std::numbers::pi / 2.0;
  switch (spec.kind) {
    case PathKind::kFlowMatching:
      return {0.0, t, 0.0, 1.0, t * spec.sigma_min - t + 1.0, spec.sigma_min - 1.0};
    case PathKind::kRectified:
      return {1.0 - t, t, -1.0, 1.0, 0.0, 0.0};
    case PathKind::kVpTrig:
      return {std::cos(half_pi * t), std::sin(half_pi * t), -half_pi * std::sin(half_pi * t),
              half_pi * std::cos(half_pi * t), 0.0, 0.0};
    case PathKind::kIcfm:
      return {1.0 - t, t, -1.0, 1.0, spec.sigma, 0.0};
  }
  throw ConfigError("path: unknown kind");
}

Tensor combine(double a0, const Tensor& x0, double a1, const Tensor& x1) {
  if (a0 == 0.0 && x0.empty()) return scale(x1, a1);
  if (!x0.same_shape(x1))
    throw ShapeError("path: conditioning shapes " + x0.shape_str() + " and " + x1.shape_str() +
                     " do not match");
  Tensor out(x1.shape());
  const auto p0 = x0.data();
  const auto p1 = x1.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a0 * p0[i] + a1 * p1[i];
  return out;
}

}  // namespace

PathKind path_kind_from_string(const std::string& name) {
  if (name == "fm") return PathKind::kFlowMatching;
  if (name == "rectified") return PathKind::kRectified;
  if (name == "vptrig") return PathKind::kVpTrig;
  if (name == "icfm") return PathKind::kIcfm;
  throw ConfigError("path: unknown kind '" + name + "'");
}

std::string to_string(PathKind kind) {
  switch (kind) {
    case PathKind::kFlowMatching: return "fm";
    case PathKind::kRectified: return "rectified";
    case PathKind::kVpTrig: return "vptrig";
    case PathKind::kIcfm: return "icfm";
  }
  return "?";
}

PathPoint mu_sigma(const PathSpec& spec, double t, const Tensor& x0, const Tensor& x1) {
  check_t(t);
  if (spec.couples_prior() && x0.empty())
    throw ShapeError("path: kind '" + to_string(spec.kind) + "' conditions on (x0, x1)");
  const Coeffs c = coeffs_at(spec, t);
  PathPoint p;
  p.mu = combine(c.a0, x0, c.a1, x1);
  p.dmu = combine(c.da0, x0, c.da1, x1);
  p.sigma = c.sigma;
  p.dsigma = c.dsigma;
  if (p.sigma < 0.0)
    throw NumericalError("path: sigma_t = " + std::to_string(p.sigma) + " negative at t=" +
                         std::to_string(t));
  return p;
}

Tensor sample_xt(const PathSpec& spec, double t, const Tensor& x0, const Tensor& x1, Rng& rng) {
  PathPoint p = mu_sigma(spec, t, x0, x1);
  if (p.sigma == 0.0) return p.mu;
  Tensor eps = randn(p.mu.shape(), rng);
  return add(p.mu, scale(eps, p.sigma));
}

Tensor cond_vector_field(const PathSpec& spec, double t, const Tensor& x, const Tensor& x0,
                         const Tensor& x1) {
  PathPoint p = mu_sigma(spec, t, x0, x1);
  if (spec.sigma_identically_zero()) return p.dmu;
  if (p.sigma == 0.0)
    throw NumericalError("path: conditional field undefined at t=" + std::to_string(t) +
                         " where sigma_t = 0");
  Tensor out = sub(x, p.mu);
  out = scale(out, p.dsigma / p.sigma);
  return add(out, p.dmu);
}

PathBatch sample_path_batch(const PathSpec& spec, const Tensor& t_rows, const Tensor& x0,
                            const Tensor& x1, Rng& rng) {
  if (x1.ndim() != 2) throw ShapeError("path batch: x1 must be rank 2");
  const std::size_t n = x1.shape()[0], d = x1.shape()[1];
  if (t_rows.size() != n)
    throw ShapeError("path batch: " + std::to_string(t_rows.size()) + " times for " +
                     std::to_string(n) + " rows");
  PathBatch out;
  out.xt = Tensor({n, d});
  out.target = Tensor({n, d});
  Tensor row0;
  for (std::size_t i = 0; i < n; ++i) {
    if (spec.couples_prior()) row0 = slice_rows(x0, i, i + 1).reshaped({d});
    Tensor row1 = slice_rows(x1, i, i + 1).reshaped({d});
    PathPoint p = mu_sigma(spec, t_rows[i], row0, row1);
    for (std::size_t j = 0; j < d; ++j) {
      double xt = p.mu[j];
      if (p.sigma != 0.0) xt += p.sigma * rng.normal();
      out.xt.at(i, j) = xt;
      double u = p.dmu[j];
      if (!spec.sigma_identically_zero()) {
        if (p.sigma == 0.0)
          throw NumericalError("path batch: sigma_t = 0 at t=" + std::to_string(t_rows[i]));
        u += (xt - p.mu[j]) * p.dsigma / p.sigma;
      }
      out.target.at(i, j) = u;
    }
  }
  return out;
}

}  // namespace dualflow
