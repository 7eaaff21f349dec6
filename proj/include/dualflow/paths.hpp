#pragma once

#include <string>

#include "dualflow/rng.hpp"
#include "dualflow/tensor.hpp"

namespace dualflow {

// Gaussian conditional probability path p_t(x|z) = N(mu_t(z), sigma_t^2 I).
// FlowMatching conditions on z = x1 alone; the other kinds couple
// z = (x0, x1) with x0 drawn from the prior and x1 from the data.
enum class PathKind { kFlowMatching, kRectified, kVpTrig, kIcfm };

PathKind path_kind_from_string(const std::string& name);
std::string to_string(PathKind kind);

struct PathSpec {
  PathKind kind = PathKind::kIcfm;
  double sigma_min = 0.01;  // FlowMatching width at t=1
  double sigma = 0.1;       // Icfm constant width

  bool couples_prior() const { return kind != PathKind::kFlowMatching; }
  // True when sigma_t is identically zero, so the conditional field
  // degenerates to u = mu'.
  bool sigma_identically_zero() const {
    return kind == PathKind::kRectified || kind == PathKind::kVpTrig;
  }
};

struct PathPoint {
  Tensor mu;    // {D}
  Tensor dmu;   // d mu / dt
  double sigma = 0.0;
  double dsigma = 0.0;
};

// Mean/width and their time derivatives at time t. x0 may be empty for
// the FlowMatching kind.
PathPoint mu_sigma(const PathSpec& spec, double t, const Tensor& x0, const Tensor& x1);

// x_t = mu_t(z) + sigma_t * eps.
Tensor sample_xt(const PathSpec& spec, double t, const Tensor& x0, const Tensor& x1, Rng& rng);

// u_t(x|z) = (x - mu_t) sigma'_t / sigma_t + mu'_t, with the analytic
// branch u = mu' when sigma_t is identically zero for the path.
Tensor cond_vector_field(const PathSpec& spec, double t, const Tensor& x, const Tensor& x0,
                         const Tensor& x1);

// Batched variants used by the training loop: per-row times {n},
// row-matched conditioning {n, D}.
struct PathBatch {
  Tensor xt;      // {n, D} sampled points
  Tensor target;  // {n, D} conditional field at xt
};
PathBatch sample_path_batch(const PathSpec& spec, const Tensor& t_rows, const Tensor& x0,
                            const Tensor& x1, Rng& rng);

}  // namespace dualflow
