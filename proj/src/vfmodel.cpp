#include "dualflow/vfmodel.hpp"

#include <cmath>
#include <numbers>

#include "dualflow/errors.hpp"

namespace dualflow {

namespace {

constexpr double kTimeSlack = 1e-9;  // absorb solver round-off at the endpoints

double checked_time(double t) {
  if (t < -kTimeSlack || t > 1.0 + kTimeSlack)
    throw Error("eval_field: t=" + std::to_string(t) + " outside [0,1]");
  return t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
}

void fill_embedding(double t, std::size_t embed_dim, double* out) {
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t k = 0; k < embed_dim / 2; ++k) {
    const double angle = two_pi * std::ldexp(1.0, static_cast<int>(k)) * t;
    out[2 * k] = std::sin(angle);
    out[2 * k + 1] = std::cos(angle);
  }
}

}  // namespace

Tensor time_embed(double t, std::size_t embed_dim) {
  if (embed_dim == 0 || embed_dim % 2 != 0)
    throw ShapeError("time_embed: embedding size " + std::to_string(embed_dim) +
                     " must be even and positive");
  Tensor out({embed_dim});
  fill_embedding(t, embed_dim, out.data().data());
  return out;
}

Tensor time_embed_rows(const Tensor& t_rows, std::size_t embed_dim) {
  if (embed_dim == 0 || embed_dim % 2 != 0)
    throw ShapeError("time_embed: embedding size " + std::to_string(embed_dim) +
                     " must be even and positive");
  if (t_rows.ndim() != 1) throw ShapeError("time_embed: times must be rank 1");
  const std::size_t n = t_rows.size();
  Tensor out({n, embed_dim});
  for (std::size_t i = 0; i < n; ++i)
    fill_embedding(t_rows[i], embed_dim, out.data().data() + i * embed_dim);
  return out;
}

Var FlowField::eval_rows(Tape&, const Tensor&, const Var&) const {
  throw Error("eval_rows: per-row time evaluation not implemented for this field");
}

std::pair<Var, Var> FlowField::eval_jvp(Tape&, double, const Var&, const Tensor&) const {
  throw Error("eval_jvp: directional derivatives not implemented for this field");
}

Tensor FlowField::eval_value(double t, const Tensor& x) const {
  Tape tape;
  Var xv = make_var(x, /*requires_grad=*/false);
  return eval(tape, t, xv)->value;
}

MlpVectorField::MlpVectorField(std::size_t dim, std::vector<std::size_t> hidden,
                               std::size_t embed_dim, Rng& rng, FieldInit init)
    : dim_(dim), hidden_(std::move(hidden)), embed_dim_(embed_dim) {
  if (dim_ == 0) throw ShapeError("vector field: dimension must be positive");
  if (embed_dim_ == 0 || embed_dim_ % 2 != 0)
    throw ShapeError("vector field: time embedding size must be even and positive");
  std::vector<std::size_t> widths;
  widths.push_back(dim_ + embed_dim_);
  for (std::size_t h : hidden_) widths.push_back(h);
  widths.push_back(dim_);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    const bool final_layer = (l + 2 == widths.size());
    Tensor w({fan_in, fan_out});
    if (!(final_layer && init == FieldInit::kZeroFinal)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      w = rand_uniform({fan_in, fan_out}, -bound, bound, rng);
    }
    weights_.push_back(make_var(std::move(w), /*requires_grad=*/true));
    biases_.push_back(make_var(Tensor::zeros({fan_out}), /*requires_grad=*/true));
  }
}

Var MlpVectorField::forward(Tape& tape, const Tensor& embedded, const Var& x) const {
  if (x->value.ndim() != 2 || x->value.shape()[1] != dim_)
    throw ShapeError("eval_field: input shape " + x->value.shape_str() + " expects (*, " +
                     std::to_string(dim_) + ")");
  Var h = tape.concat_cols(make_var(embedded), x);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = tape.affine(h, weights_[l], biases_[l]);
    if (l + 1 < weights_.size()) h = tape.tanh(h);
  }
  return h;
}

Var MlpVectorField::eval(Tape& tape, double t, const Var& x) const {
  const double tc = checked_time(t);
  const std::size_t n = x->value.shape()[0];
  Tensor e = time_embed(tc, embed_dim_);
  Tensor embedded({n, embed_dim_});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < embed_dim_; ++j) embedded.at(i, j) = e[j];
  return forward(tape, embedded, x);
}

Var MlpVectorField::eval_rows(Tape& tape, const Tensor& t_rows, const Var& x) const {
  for (double t : t_rows.data()) checked_time(t);
  return forward(tape, time_embed_rows(t_rows, embed_dim_), x);
}

std::pair<Var, Var> MlpVectorField::eval_jvp(Tape& tape, double t, const Var& x,
                                             const Tensor& dx) const {
  const double tc = checked_time(t);
  if (!dx.same_shape(x->value))
    throw ShapeError("eval_jvp: direction shape " + dx.shape_str() + " does not match input " +
                     x->value.shape_str());
  const std::size_t n = x->value.shape()[0];
  Tensor e = time_embed(tc, embed_dim_);
  Tensor embedded({n, embed_dim_});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < embed_dim_; ++j) embedded.at(i, j) = e[j];

  Var h = tape.concat_cols(make_var(embedded), x);
  // The embedding block is constant w.r.t. x, so its tangent is zero.
  Var jv = tape.concat_cols(make_var(Tensor::zeros({n, embed_dim_})), make_var(dx));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = tape.affine(h, weights_[l], biases_[l]);
    jv = tape.matmul(jv, weights_[l]);
    if (l + 1 < weights_.size()) {
      h = tape.tanh(h);
      // d tanh = (1 - tanh^2), taped so the divergence stays trainable.
      Var dact = tape.add_const(tape.neg(tape.square(h)), 1.0);
      jv = tape.mul(jv, dact);
    }
  }
  return {h, jv};
}

std::vector<Var> MlpVectorField::params() const {
  std::vector<Var> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

std::vector<std::pair<std::string, Var>> MlpVectorField::named_params() const {
  std::vector<std::pair<std::string, Var>> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.emplace_back("layer" + std::to_string(l) + ".weight", weights_[l]);
    out.emplace_back("layer" + std::to_string(l) + ".bias", biases_[l]);
  }
  return out;
}

GaussianPrior::GaussianPrior(std::size_t dim)
    : dim_(dim),
      mu_(make_var(Tensor::zeros({dim}), /*requires_grad=*/true)),
      log_sigma_(make_var(Tensor::zeros({dim}), /*requires_grad=*/true)) {
  if (dim_ == 0) throw ShapeError("prior: dimension must be positive");
}

void GaussianPrior::init_standard() {
  mu_->value = Tensor::zeros({dim_});
  log_sigma_->value = Tensor::zeros({dim_});
}

void GaussianPrior::init_moments(const Tensor& mean, const Tensor& std) {
  if (mean.size() != dim_ || std.size() != dim_)
    throw ShapeError("prior: moment shapes " + mean.shape_str() + ", " + std.shape_str() +
                     " do not match dimension " + std::to_string(dim_));
  mu_->value = mean.reshaped({dim_});
  log_sigma_->value = log_of(clamp_min(std.reshaped({dim_}), 1e-8));
}

Tensor GaussianPrior::stddev() const { return exp_of(log_sigma_->value); }

Tensor GaussianPrior::log_pdf(const Tensor& x) const {
  if (x.ndim() != 2 || x.shape()[1] != dim_)
    throw ShapeError("prior log_pdf: input shape " + x.shape_str() + " expects (*, " +
                     std::to_string(dim_) + ")");
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  Tensor centered = add_rowvec(x, neg(mu_->value));
  Tensor inv_var = exp_of(scale(log_sigma_->value, -2.0));
  Tensor quad = row_sum(mul_rowvec(square(centered), inv_var));
  const double log_det = sum(log_sigma_->value);
  Tensor out = scale(quad, -0.5);
  return add_const(out, -log_det - 0.5 * static_cast<double>(dim_) * log_two_pi);
}

Var GaussianPrior::log_pdf(Tape& tape, const Var& x) const {
  if (x->value.ndim() != 2 || x->value.shape()[1] != dim_)
    throw ShapeError("prior log_pdf: input shape " + x->value.shape_str() + " expects (*, " +
                     std::to_string(dim_) + ")");
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  Var centered = tape.add_rowvec(x, tape.neg(mu_));
  Var inv_var = tape.exp(tape.scale(log_sigma_, -2.0));
  Var quad = tape.row_sum(tape.mul_rowvec(tape.square(centered), inv_var));
  Var out = tape.scale(quad, -0.5);
  out = tape.add_scalar(out, tape.neg(tape.sum(log_sigma_)));
  return tape.add_const(out, -0.5 * static_cast<double>(dim_) * log_two_pi);
}

Tensor GaussianPrior::sample(std::size_t n, Rng& rng) const {
  if (n == 0) return Tensor();
  Tensor eps = randn({n, dim_}, rng);
  return add_rowvec(mul_rowvec(eps, stddev()), mu_->value);
}

std::vector<std::pair<std::string, Var>> GaussianPrior::named_params() const {
  return {{"mu", mu_}, {"log_sigma", log_sigma_}};
}

}  // namespace dualflow
