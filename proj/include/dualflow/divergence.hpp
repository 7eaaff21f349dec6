#pragma once

#include <cstdint>

#include "dualflow/rng.hpp"
#include "dualflow/tensor.hpp"
#include "dualflow/vfmodel.hpp"

namespace dualflow {

// exact_trace refuses dimensions above this; use Hutchinson instead.
inline constexpr std::size_t kExactTraceDimGuard = 512;

struct TraceEstimator {
  enum class Kind { kExact, kHutchinson };
  enum class Probe { kRademacher, kGaussian };

  Kind kind = Kind::kHutchinson;
  int probes = 1;
  Probe probe = Probe::kRademacher;
  std::uint64_t seed = 0;

  static TraceEstimator exact() { return {Kind::kExact, 0, Probe::kRademacher, 0}; }
  static TraceEstimator hutchinson(int probes = 1, Probe probe = Probe::kRademacher,
                                   std::uint64_t seed = 0) {
    return {Kind::kHutchinson, probes, probe, seed};
  }
};

// vᵀ(∂f/∂x) for every batch row at once; rows are independent.
Tensor field_vjp(const FlowField& field, double t, const Tensor& x, const Tensor& v);

// Tr(∂v/∂xᵀ) per batch row via D basis-vector VJPs. Throws for D above
// the guard, pointing at the Hutchinson estimator.
Tensor exact_trace(const FlowField& field, double t, const Tensor& x);

// Unbiased E[εᵀJε] with probes from est.probe; seeded and reproducible.
Tensor hutchinson_trace(const FlowField& field, double t, const Tensor& x,
                        const TraceEstimator& est);

// One Hutchinson draw with a caller-supplied probe. The ODE solvers use
// this to hold the probe fixed across the stages of a step.
Tensor hutchinson_trace_with_probe(const FlowField& field, double t, const Tensor& x,
                                   const Tensor& probe);

Tensor draw_probe(TraceEstimator::Probe probe, std::size_t n, std::size_t d, Rng& rng);

// Dispatch on est.kind; `probe` must be supplied for Hutchinson.
Tensor estimate_trace(const FlowField& field, double t, const Tensor& x,
                      const TraceEstimator& est, const Tensor* probe);

}  // namespace dualflow
