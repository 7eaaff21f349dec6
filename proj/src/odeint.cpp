#include "dualflow/odeint.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dualflow/errors.hpp"

namespace dualflow {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187, kA53 = 64448.0 / 6561,
                 kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33, kA63 = 46732.0 / 5247,
                 kA64 = 49.0 / 176, kA65 = -5103.0 / 18656;
constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192,
                 kB5 = -2187.0 / 6784, kB6 = 11.0 / 84;
// b - b*: weights of the embedded error estimate.
constexpr double kE1 = 71.0 / 57600, kE3 = -71.0 / 16695, kE4 = 71.0 / 1920,
                 kE5 = -17253.0 / 339200, kE6 = 22.0 / 525, kE7 = -1.0 / 40;
constexpr double kC2 = 1.0 / 5, kC3 = 3.0 / 10, kC4 = 4.0 / 5, kC5 = 8.0 / 9;

constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;               // PI stabilization
constexpr double kExpo = 0.2 - 0.75 * kBeta;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;
constexpr double kMinStep = 1e-6;

Tensor axpy(const Tensor& y, double a, const Tensor& k) {
  Tensor out(y.shape());
  const auto py = y.data();
  const auto pk = k.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = py[i] + a * pk[i];
  return out;
}

Tensor combine(const Tensor& y, double h, std::initializer_list<std::pair<double, const Tensor*>> terms) {
  Tensor out = y;
  auto dst = out.data();
  for (auto [w, k] : terms) {
    if (w == 0.0) continue;
    const auto pk = k->data();
    const double hw = h * w;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += hw * pk[i];
  }
  return out;
}

OdeResult euler(const OdeRhs& rhs, Tensor y, const SolverConfig& cfg,
                const std::function<void()>& on_step) {
  const double h = (cfg.t1 - cfg.t0) / cfg.steps;
  long nfe = 0;
  for (int k = 0; k < cfg.steps; ++k) {
    if (on_step) on_step();
    const double t = cfg.t0 + k * h;
    Tensor dy = rhs(t, y);
    ++nfe;
    ensure_finite("euler", dy);
    y = axpy(y, h, dy);
  }
  return {std::move(y), nfe};
}

OdeResult dopri5(const OdeRhs& rhs, Tensor y, const SolverConfig& cfg,
                 const std::function<void()>& on_step) {
  const double span = cfg.t1 - cfg.t0;
  const double dir = span >= 0.0 ? 1.0 : -1.0;
  const double interval = std::abs(span);
  double t = cfg.t0;
  double h = dir * std::clamp(interval / 10.0, kMinStep, interval);

  long nfe = 0;
  auto eval = [&](double tt, const Tensor& yy) {
    Tensor dy = rhs(tt, yy);
    ++nfe;
    ensure_finite("dopri5", dy);
    return dy;
  };

  if (on_step) on_step();
  Tensor k1 = eval(t, y);
  double err_old = 1e-4;
  bool just_rejected = false;
  int attempts = 0;

  while (dir * (cfg.t1 - t) > 0.0) {
    if (++attempts > cfg.max_steps) {
      throw NumericalError("dopri5: exceeded max_steps=" + std::to_string(cfg.max_steps) +
                           " at t=" + std::to_string(t));
    }
    // Do not step past the endpoint; keep |h| within bounds elsewhere.
    if (dir * (t + h - cfg.t1) > 0.0) h = cfg.t1 - t;

    Tensor k2 = eval(t + kC2 * h, combine(y, h, {{kA21, &k1}}));
    Tensor k3 = eval(t + kC3 * h, combine(y, h, {{kA31, &k1}, {kA32, &k2}}));
    Tensor k4 = eval(t + kC4 * h, combine(y, h, {{kA41, &k1}, {kA42, &k2}, {kA43, &k3}}));
    Tensor k5 =
        eval(t + kC5 * h, combine(y, h, {{kA51, &k1}, {kA52, &k2}, {kA53, &k3}, {kA54, &k4}}));
    Tensor k6 = eval(
        t + h, combine(y, h, {{kA61, &k1}, {kA62, &k2}, {kA63, &k3}, {kA64, &k4}, {kA65, &k5}}));
    Tensor y5 =
        combine(y, h, {{kB1, &k1}, {kB3, &k3}, {kB4, &k4}, {kB5, &k5}, {kB6, &k6}});
    Tensor k7 = eval(t + h, y5);

    // Scaled RMS of the embedded error.
    double err_sq = 0.0;
    {
      const auto p1 = k1.data();
      const auto p3 = k3.data();
      const auto p4 = k4.data();
      const auto p5 = k5.data();
      const auto p6 = k6.data();
      const auto p7 = k7.data();
      const auto py = y.data();
      const auto py5 = y5.data();
      const std::size_t m = py.size();
      for (std::size_t i = 0; i < m; ++i) {
        const double e = h * (kE1 * p1[i] + kE3 * p3[i] + kE4 * p4[i] + kE5 * p5[i] +
                              kE6 * p6[i] + kE7 * p7[i]);
        const double sc = cfg.atol + cfg.rtol * std::max(std::abs(py[i]), std::abs(py5[i]));
        err_sq += (e / sc) * (e / sc);
      }
      err_sq /= static_cast<double>(m);
    }
    const double err = std::sqrt(err_sq);

    if (err <= 1.0) {
      t += h;
      y = std::move(y5);
      k1 = std::move(k7);  // first-same-as-last

      const double grow = just_rejected ? 1.0 : kMaxFactor;
      double factor = kSafety * std::pow(std::max(err, 1e-10), -kExpo) * std::pow(err_old, kBeta);
      factor = std::clamp(factor, kMinFactor, grow);
      err_old = std::max(err, 1e-4);
      just_rejected = false;

      if (dir * (cfg.t1 - t) > 0.0) {
        h = dir * std::clamp(std::abs(h) * factor, kMinStep, interval);
        if (on_step) on_step();
      }
    } else {
      double factor = std::clamp(kSafety * std::pow(err, -kExpo), kMinFactor, 1.0);
      h = dir * std::max(std::abs(h) * factor, kMinStep);
      just_rejected = true;
    }
  }
  return {std::move(y), nfe};
}

}  // namespace

void SolverConfig::validate() const {
  if (method == Method::kEuler && steps < 1)
    throw ConfigError("solver: euler needs steps >= 1, got " + std::to_string(steps));
  if (method == Method::kDopri5) {
    if (atol <= 0.0 || rtol <= 0.0)
      throw ConfigError("solver: dopri5 needs atol, rtol > 0");
    if (max_steps < 1) throw ConfigError("solver: dopri5 needs max_steps >= 1");
  }
}

OdeResult integrate(const OdeRhs& rhs, const Tensor& y0, const SolverConfig& cfg,
                    const std::function<void()>& on_step) {
  cfg.validate();
  if (y0.empty()) return {y0, 0};
  if (cfg.t0 == cfg.t1) return {y0, 0};
  return cfg.method == SolverConfig::Method::kEuler ? euler(rhs, y0, cfg, on_step)
                                                    : dopri5(rhs, y0, cfg, on_step);
}

OdeResult solve(const OdeRhs& field, const Tensor& x0, const SolverConfig& cfg) {
  return integrate(field, x0, cfg);
}

OdeResult solve(const FlowField& field, const Tensor& x0, const SolverConfig& cfg) {
  return integrate([&](double t, const Tensor& x) { return field.eval_value(t, x); }, x0, cfg);
}

AugmentedState solve_with_logdet(const FlowField& field, const Tensor& x_start,
                                 const SolverConfig& cfg, const TraceEstimator& est) {
  if (x_start.ndim() != 2)
    throw ShapeError("solve_with_logdet: state must be rank 2, got " + x_start.shape_str());
  const std::size_t n = x_start.shape()[0], d = x_start.shape()[1];

  Rng probe_rng(est.seed);
  std::vector<Tensor> probes;
  auto refresh_probes = [&] {
    if (est.kind != TraceEstimator::Kind::kHutchinson) return;
    probes.clear();
    for (int p = 0; p < std::max(est.probes, 1); ++p)
      probes.push_back(draw_probe(est.probe, n, d, probe_rng));
  };

  auto rhs = [&](double t, const Tensor& y) {
    Tensor x = slice_cols(y, 0, d);
    Tensor v = field.eval_value(t, x);
    Tensor tr({n});
    if (est.kind == TraceEstimator::Kind::kExact) {
      tr = exact_trace(field, t, x);
    } else {
      for (const Tensor& probe : probes)
        tr = add(tr, hutchinson_trace_with_probe(field, t, x, probe));
      tr = scale(tr, 1.0 / static_cast<double>(probes.size()));
    }
    return concat_cols(v, neg(tr).reshaped({n, 1}));
  };

  Tensor y0 = concat_cols(x_start, Tensor::zeros({n, 1}));
  OdeResult res = integrate(rhs, y0, cfg, refresh_probes);
  AugmentedState out;
  out.x = slice_cols(res.x, 0, d);
  out.delta_logp = slice_cols(res.x, d, d + 1).reshaped({n});
  out.nfe = res.nfe;
  return out;
}

Tensor push_forward_sample(const FlowField& field, const GaussianPrior& prior, std::size_t n,
                           SolverConfig cfg, std::uint64_t seed) {
  if (n == 0) return Tensor();
  Rng rng(seed);
  Tensor x0 = prior.sample(n, rng);
  cfg = cfg.with_direction(0.0, 1.0);
  return solve(field, x0, cfg).x;
}

}  // namespace dualflow
