#include "dualflow/divergence.hpp"

#include "dualflow/autodiff.hpp"
#include "dualflow/errors.hpp"

namespace dualflow {

Tensor field_vjp(const FlowField& field, double t, const Tensor& x, const Tensor& v) {
  return vjp([&](Tape& tape, const Var& xv) { return field.eval(tape, t, xv); }, x, v);
}

Tensor exact_trace(const FlowField& field, double t, const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError("exact_trace: input must be rank 2");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (d > kExactTraceDimGuard)
    throw Error("exact_trace: dimension " + std::to_string(d) + " exceeds guard " +
                std::to_string(kExactTraceDimGuard) + "; use the Hutchinson estimator");
  Tensor tr({n});
  for (std::size_t j = 0; j < d; ++j) {
    Tensor basis = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) basis.at(i, j) = 1.0;
    Tensor row = field_vjp(field, t, x, basis);  // e_jᵀ J per batch row
    for (std::size_t i = 0; i < n; ++i) tr[i] += row.at(i, j);
  }
  return tr;
}

Tensor draw_probe(TraceEstimator::Probe probe, std::size_t n, std::size_t d, Rng& rng) {
  return probe == TraceEstimator::Probe::kRademacher ? rademacher({n, d}, rng)
                                                     : randn({n, d}, rng);
}

Tensor hutchinson_trace_with_probe(const FlowField& field, double t, const Tensor& x,
                                   const Tensor& probe) {
  Tensor vj = field_vjp(field, t, x, probe);  // εᵀJ per row
  return row_sum(mul(vj, probe));             // εᵀJε
}

Tensor hutchinson_trace(const FlowField& field, double t, const Tensor& x,
                        const TraceEstimator& est) {
  if (est.probes < 1) throw ConfigError("hutchinson: probes must be >= 1");
  const std::size_t n = x.rows(), d = x.cols();
  Rng rng(est.seed);
  Tensor acc({n});
  for (int p = 0; p < est.probes; ++p) {
    Tensor probe = draw_probe(est.probe, n, d, rng);
    acc = add(acc, hutchinson_trace_with_probe(field, t, x, probe));
  }
  return scale(acc, 1.0 / static_cast<double>(est.probes));
}

Tensor estimate_trace(const FlowField& field, double t, const Tensor& x,
                      const TraceEstimator& est, const Tensor* probe) {
  if (est.kind == TraceEstimator::Kind::kExact) return exact_trace(field, t, x);
  if (probe == nullptr) throw Error("estimate_trace: Hutchinson requires a probe");
  return hutchinson_trace_with_probe(field, t, x, *probe);
}

}  // namespace dualflow
