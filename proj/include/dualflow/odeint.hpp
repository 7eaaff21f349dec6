#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "dualflow/divergence.hpp"
#include "dualflow/tensor.hpp"
#include "dualflow/vfmodel.hpp"

namespace dualflow {

struct SolverConfig {
  enum class Method { kEuler, kDopri5 };

  Method method = Method::kDopri5;
  int steps = 4;  // Euler only
  double atol = 1e-1;
  double rtol = 1e-2;
  int max_steps = 100000;  // Dopri5 attempted steps
  double t0 = 0.0;
  double t1 = 1.0;

  void validate() const;
  SolverConfig with_direction(double a, double b) const {
    SolverConfig c = *this;
    c.t0 = a;
    c.t1 = b;
    return c;
  }
  bool fixed_step() const { return method == Method::kEuler; }
  // "F" for the fixed-step mode, "V" for the variable-step mode.
  std::string tag() const { return method == Method::kEuler ? "F" : "V"; }
};

using OdeRhs = std::function<Tensor(double, const Tensor&)>;

struct OdeResult {
  Tensor x;
  long nfe = 0;
};

// Integrates dy/dt = rhs(t, y) from cfg.t0 to cfg.t1 in either direction.
// on_step, when given, runs once before every fresh step (not on Dopri5
// retries); the log-density solver uses it to redraw trace probes.
OdeResult integrate(const OdeRhs& rhs, const Tensor& y0, const SolverConfig& cfg,
                    const std::function<void()>& on_step = nullptr);

OdeResult solve(const OdeRhs& field, const Tensor& x0, const SolverConfig& cfg);
OdeResult solve(const FlowField& field, const Tensor& x0, const SolverConfig& cfg);

// (x, accumulated log-density change, field evaluation count).
// delta_logp integrates d(delta)/dt = -Tr(∂v/∂xᵀ) along the traversal, so
// log p_{t1}(x_end) = log p_{t0}(x_start) + delta_logp.
struct AugmentedState {
  Tensor x;            // {n, D}
  Tensor delta_logp;   // {n}
  long nfe = 0;
};

AugmentedState solve_with_logdet(const FlowField& field, const Tensor& x_start,
                                 const SolverConfig& cfg, const TraceEstimator& est);

// Samples the prior and transports the draws through the field over
// t: 0 -> 1.
Tensor push_forward_sample(const FlowField& field, const GaussianPrior& prior, std::size_t n,
                           SolverConfig cfg, std::uint64_t seed);

}  // namespace dualflow
