#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dualflow/autodiff.hpp"
#include "dualflow/divergence.hpp"
#include "dualflow/odeint.hpp"
#include "dualflow/paths.hpp"
#include "dualflow/rng.hpp"
#include "dualflow/vfmodel.hpp"

namespace dualflow {

enum class DfmVariant { kCosPair, kCosProductOnes };

DfmVariant dfm_variant_from_string(const std::string& name);
std::string to_string(DfmVariant v);

struct DfmConfig {
  DfmVariant variant = DfmVariant::kCosPair;
  // Fraction of the step budget spent pre-training both fields with the
  // conditional objective before the joint cosine phase.
  double warmup_frac = 0.5;
  PathKind warmup_path = PathKind::kIcfm;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig cfg);
  void step();  // consumes grads accumulated by backward()

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  long t_ = 0;
};

// Negative mean log-likelihood via the discretized flow: Euler from t=1
// to t=0 on the tape, divergence estimated with taped JVPs so gradients
// reach the parameters and the prior.
Var mle_loss(Tape& tape, const FlowField& model, const GaussianPrior& prior,
             const Tensor& x1, int euler_steps, const TraceEstimator& est, Rng& rng);

// E || v(t, x_t) - u_t(x_t|z) ||^2 with one (t, z, eps) draw per row.
// x0 must hold prior draws for coupled paths and may be empty otherwise.
Var cfm_loss(Tape& tape, const FlowField& model, const PathSpec& path, const Tensor& x1,
             const Tensor& x0, Rng& rng);

// Cosine alignment of the two fields on independently drawn batches.
Var dfm_loss(Tape& tape, const FlowField& field_theta, const FlowField& field_lambda,
             const Tensor& data_batch, const Tensor& prior_batch, const Tensor& t_rows,
             DfmVariant variant);

// Same loss evaluated directly on field outputs; the property-test surface.
double dfm_loss_value(const Tensor& v_theta, const Tensor& v_lambda, DfmVariant variant);

// mean || phi_lambda^{-1}(phi_theta(x)) - x ||_2 over the batch: forward
// 0->1 under theta, then 1->0 under lambda.
double bijectivity_residual(const FlowField& field_theta, const FlowField& field_lambda,
                            const Tensor& x, const SolverConfig& cfg);

enum class PriorInit { kStandard, kDataMoments, kDataOffset };
PriorInit prior_init_from_string(const std::string& name);
std::string to_string(PriorInit p);

struct TrainOptions {
  std::string objective = "icfm";  // mle|fm|icfm|rectified|vptrig|dfm
  PathSpec path;
  DfmConfig dfm;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embed_dim = 8;
  FieldInit init = FieldInit::kZeroFinal;
  AdamConfig adam;
  int batch = 256;
  int steps = 2000;
  int mle_euler_steps = 64;
  TraceEstimator trace = TraceEstimator::hutchinson();
  PriorInit prior_init = PriorInit::kStandard;
  double prior_offset = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainRecord {
  int step = 0;
  std::string phase;  // "mle", "cfm", "cfm_warmup", "dfm"
  double loss = 0.0;
  // The joint cosine objective tracked across every step of a dfm run
  // (NaN for other objectives).
  double dfm_metric = 0.0;
};

struct TrainState {
  std::shared_ptr<MlpVectorField> theta;
  std::shared_ptr<MlpVectorField> lambda;  // dfm only
  std::shared_ptr<GaussianPrior> prior;
  std::vector<TrainRecord> history;
  int step = 0;
  std::string rng_state;
};

// Minibatch optimization of the selected objective on the rows of
// train_rows. Deterministic given options.seed.
TrainState train(const TrainOptions& opts, const Tensor& train_rows);

}  // namespace dualflow
