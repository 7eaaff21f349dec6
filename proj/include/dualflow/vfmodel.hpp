#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dualflow/autodiff.hpp"
#include "dualflow/rng.hpp"
#include "dualflow/tensor.hpp"

namespace dualflow {

// Sinusoidal features [sin(2π 2^k t), cos(2π 2^k t)] for k = 0 .. E/2-1.
// E must be even.
Tensor time_embed(double t, std::size_t embed_dim);
// Per-row embedding: {n} -> {n, E}.
Tensor time_embed_rows(const Tensor& t_rows, std::size_t embed_dim);

// A time-dependent velocity field on R^D. Implementations must be
// deterministic given (t, x) and safe to evaluate on throwaway tapes.
class FlowField {
 public:
  virtual ~FlowField() = default;
  virtual std::size_t dim() const = 0;
  // Shared time for the whole batch; x is {n, D}.
  virtual Var eval(Tape& tape, double t, const Var& x) const = 0;
  // Per-row times {n}; default errors for fields that never train.
  virtual Var eval_rows(Tape& tape, const Tensor& t_rows, const Var& x) const;

  // Forward value together with the directional derivative J(t,x)·dx,
  // both on the tape. Default errors; trainable fields override so the
  // divergence stays differentiable without second-order machinery.
  virtual std::pair<Var, Var> eval_jvp(Tape& tape, double t, const Var& x,
                                       const Tensor& dx) const;

  // Convenience non-taped evaluation.
  Tensor eval_value(double t, const Tensor& x) const;
};

enum class FieldInit { kZeroFinal, kRandom };

// Fully-connected field v(t, x): input [time_embed(t), x], tanh hidden
// layers, linear output of width D. Both the forward and the reverse flow
// models are instances of this class.
class MlpVectorField : public FlowField {
 public:
  MlpVectorField(std::size_t dim, std::vector<std::size_t> hidden, std::size_t embed_dim,
                 Rng& rng, FieldInit init = FieldInit::kZeroFinal);

  std::size_t dim() const override { return dim_; }
  std::size_t embed_dim() const { return embed_dim_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }

  Var eval(Tape& tape, double t, const Var& x) const override;
  Var eval_rows(Tape& tape, const Tensor& t_rows, const Var& x) const override;
  std::pair<Var, Var> eval_jvp(Tape& tape, double t, const Var& x,
                               const Tensor& dx) const override;

  std::vector<Var> params() const;
  std::vector<std::pair<std::string, Var>> named_params() const;

 private:
  Var forward(Tape& tape, const Tensor& embedded, const Var& x) const;

  std::size_t dim_;
  std::vector<std::size_t> hidden_;
  std::size_t embed_dim_;
  std::vector<Var> weights_;  // layer i: {fan_in, fan_out}
  std::vector<Var> biases_;   // layer i: {fan_out}
};

// Diagonal Gaussian with learnable mean and log standard deviation.
class GaussianPrior {
 public:
  explicit GaussianPrior(std::size_t dim);

  std::size_t dim() const { return dim_; }

  void init_standard();
  void init_moments(const Tensor& mean, const Tensor& std);

  Tensor mean() const { return mu_->value; }
  Tensor stddev() const;

  // Row-wise log N(x | mu, diag(sigma^2)): {n, D} -> {n}.
  Tensor log_pdf(const Tensor& x) const;
  Var log_pdf(Tape& tape, const Var& x) const;

  Tensor sample(std::size_t n, Rng& rng) const;

  std::vector<Var> params() const { return {mu_, log_sigma_}; }
  std::vector<std::pair<std::string, Var>> named_params() const;

 private:
  std::size_t dim_;
  Var mu_;
  Var log_sigma_;
};

}  // namespace dualflow
