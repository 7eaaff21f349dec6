#include "dualflow/objectives.hpp"

#include <cmath>
#include <limits>

#include "dualflow/errors.hpp"

namespace dualflow {

namespace {

constexpr double kNormFloor = 1e-8;
// Keeps the conditional field defined for paths whose width hits zero
// exactly at t = 1.
constexpr double kTimeCap = 1.0 - 1e-6;

// v / max(||v||_row, floor), with the floor applied under the square root
// so zero rows carry a finite pull-back.
Var normalize_rows(Tape& tape, const Var& v) {
  Var sq = tape.row_sum(tape.square(v));
  Var norm = tape.sqrt(tape.clamp_min(sq, kNormFloor * kNormFloor));
  Var inv = tape.divide(make_var(Tensor::ones(norm->value.shape())), norm);
  return tape.scale_rows(v, inv);
}

Var dfm_cos_from_outputs(Tape& tape, const Var& v_theta, const Var& v_lambda,
                         DfmVariant variant) {
  if (!v_theta->value.same_shape(v_lambda->value))
    throw ShapeError("dfm_loss: field outputs " + v_theta->value.shape_str() + " and " +
                     v_lambda->value.shape_str() + " do not match");
  Var dots;
  if (variant == DfmVariant::kCosPair) {
    Var a = normalize_rows(tape, v_theta);
    Var b = normalize_rows(tape, v_lambda);
    dots = tape.row_sum(tape.mul(a, b));
  } else {
    const std::size_t d = v_theta->value.shape()[1];
    Var w = normalize_rows(tape, tape.mul(v_theta, v_lambda));
    Tensor ones_hat = Tensor::full({d}, 1.0 / std::sqrt(static_cast<double>(d)));
    dots = tape.row_sum(tape.mul_rowvec(w, make_var(ones_hat)));
  }
  return tape.add_const(tape.neg(tape.mean(dots)), 1.0);
}

}  // namespace

DfmVariant dfm_variant_from_string(const std::string& name) {
  if (name == "cos_pair") return DfmVariant::kCosPair;
  if (name == "cos_product_ones") return DfmVariant::kCosProductOnes;
  throw ConfigError("dfm: unknown variant '" + name + "'");
}

std::string to_string(DfmVariant v) {
  return v == DfmVariant::kCosPair ? "cos_pair" : "cos_product_ones";
}

PriorInit prior_init_from_string(const std::string& name) {
  if (name == "standard") return PriorInit::kStandard;
  if (name == "data_moments") return PriorInit::kDataMoments;
  if (name == "data_offset") return PriorInit::kDataOffset;
  throw ConfigError("prior: unknown init '" + name + "'");
}

std::string to_string(PriorInit p) {
  switch (p) {
    case PriorInit::kStandard: return "standard";
    case PriorInit::kDataMoments: return "data_moments";
    case PriorInit::kDataOffset: return "data_offset";
  }
  return "?";
}

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i]->value.data();
    const auto g = params_[i]->grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      p[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

Var mle_loss(Tape& tape, const FlowField& model, const GaussianPrior& prior,
             const Tensor& x1, int euler_steps, const TraceEstimator& est, Rng& rng) {
  if (euler_steps < 1) throw ConfigError("mle_loss: euler_steps must be >= 1");
  if (x1.ndim() != 2) throw ShapeError("mle_loss: batch must be rank 2");
  const std::size_t n = x1.shape()[0], d = x1.shape()[1];
  const double h = -1.0 / euler_steps;  // traverse t: 1 -> 0

  Var x = make_var(x1);
  Var delta = make_var(Tensor::zeros({n}));
  for (int k = 0; k < euler_steps; ++k) {
    const double t = 1.0 + k * h;
    Var v;
    Var tr;
    if (est.kind == TraceEstimator::Kind::kExact) {
      if (d > kExactTraceDimGuard)
        throw Error("mle_loss: exact trace dimension " + std::to_string(d) +
                    " exceeds guard; use the Hutchinson estimator");
      for (std::size_t j = 0; j < d; ++j) {
        Tensor basis = Tensor::zeros({n, d});
        for (std::size_t i = 0; i < n; ++i) basis.at(i, j) = 1.0;
        auto [vj, jv] = model.eval_jvp(tape, t, x, basis);
        Var diag = tape.row_sum(tape.mul(jv, make_var(basis)));
        tr = tr ? tape.add(tr, diag) : diag;
        if (j == 0) v = vj;
      }
    } else {
      Tensor acc_probe;
      for (int p = 0; p < std::max(est.probes, 1); ++p) {
        Tensor probe = draw_probe(est.probe, n, d, rng);
        auto [vp, jv] = model.eval_jvp(tape, t, x, probe);
        Var quad = tape.row_sum(tape.mul(jv, make_var(probe)));
        tr = tr ? tape.add(tr, quad) : quad;
        if (p == 0) v = vp;
      }
      if (est.probes > 1) tr = tape.scale(tr, 1.0 / est.probes);
    }
    x = tape.add(x, tape.scale(v, h));
    delta = tape.add(delta, tape.scale(tr, -h));
  }
  Var logp0 = prior.log_pdf(tape, x);
  Var loglik = tape.sub(logp0, delta);  // log p1 = log p0(x_end) - delta
  return tape.neg(tape.mean(loglik));
}

Var cfm_loss(Tape& tape, const FlowField& model, const PathSpec& path, const Tensor& x1,
             const Tensor& x0, Rng& rng) {
  if (x1.ndim() != 2) throw ShapeError("cfm_loss: batch must be rank 2");
  if (path.couples_prior() && x0.empty())
    throw ShapeError("cfm_loss: path '" + to_string(path.kind) + "' needs prior draws x0");
  const std::size_t n = x1.shape()[0];
  Tensor t_rows({n});
  for (std::size_t i = 0; i < n; ++i) t_rows[i] = rng.uniform(0.0, kTimeCap);
  PathBatch pb = sample_path_batch(path, t_rows, x0, x1, rng);
  Var v = model.eval_rows(tape, t_rows, make_var(pb.xt));
  Var diff = tape.sub(v, make_var(pb.target));
  return tape.mean(tape.row_sum(tape.square(diff)));
}

Var dfm_loss(Tape& tape, const FlowField& field_theta, const FlowField& field_lambda,
             const Tensor& data_batch, const Tensor& prior_batch, const Tensor& t_rows,
             DfmVariant variant) {
  if (data_batch.ndim() != 2 || prior_batch.ndim() != 2 ||
      !data_batch.same_shape(prior_batch))
    throw ShapeError("dfm_loss: batches " + data_batch.shape_str() + " and " +
                     prior_batch.shape_str() + " must be equal rank-2 shapes");
  if (t_rows.size() != data_batch.shape()[0])
    throw ShapeError("dfm_loss: " + std::to_string(t_rows.size()) + " times for " +
                     std::to_string(data_batch.shape()[0]) + " rows");
  for (double t : t_rows.data()) {
    if (t < 0.0 || t > 1.0) throw Error("dfm_loss: t outside [0,1]");
  }
  Var v_theta = field_theta.eval_rows(tape, t_rows, make_var(data_batch));
  Var v_lambda = field_lambda.eval_rows(tape, t_rows, make_var(prior_batch));
  return dfm_cos_from_outputs(tape, v_theta, v_lambda, variant);
}

double dfm_loss_value(const Tensor& v_theta, const Tensor& v_lambda, DfmVariant variant) {
  Tape tape;
  return dfm_cos_from_outputs(tape, make_var(v_theta), make_var(v_lambda), variant)
      ->value.item();
}

double bijectivity_residual(const FlowField& field_theta, const FlowField& field_lambda,
                            const Tensor& x, const SolverConfig& cfg) {
  Tensor forward = solve(field_theta, x, cfg.with_direction(0.0, 1.0)).x;
  Tensor back = solve(field_lambda, forward, cfg.with_direction(1.0, 0.0)).x;
  return mean(row_l2_norm(sub(back, x)));
}

void TrainOptions::validate() const {
  static const char* kObjectives[] = {"mle", "fm", "icfm", "rectified", "vptrig", "dfm"};
  bool ok = false;
  for (const char* o : kObjectives) ok = ok || objective == o;
  if (!ok) throw ConfigError("train: unknown objective '" + objective + "'");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (dfm.warmup_frac < 0.0 || dfm.warmup_frac > 1.0)
    throw ConfigError("train: dfm warmup_frac must lie in [0,1]");
  if (embed_dim == 0 || embed_dim % 2 != 0)
    throw ConfigError("train: time embedding size must be even and positive");
}

namespace {

Tensor sample_batch(const Tensor& rows, int batch, Rng& rng) {
  const std::size_t n = rows.shape()[0], d = rows.shape()[1];
  Tensor out({static_cast<std::size_t>(batch), d});
  for (int i = 0; i < batch; ++i) {
    const auto r = static_cast<std::size_t>(rng.randint(0, static_cast<std::int64_t>(n) - 1));
    for (std::size_t j = 0; j < d; ++j) out.at(static_cast<std::size_t>(i), j) = rows.at(r, j);
  }
  return out;
}

PathSpec objective_path(const TrainOptions& opts) {
  PathSpec p = opts.path;
  if (opts.objective == "fm") p.kind = PathKind::kFlowMatching;
  else if (opts.objective == "icfm") p.kind = PathKind::kIcfm;
  else if (opts.objective == "rectified") p.kind = PathKind::kRectified;
  else if (opts.objective == "vptrig") p.kind = PathKind::kVpTrig;
  return p;
}

double dfm_metric_value(const MlpVectorField& theta, const MlpVectorField& lambda,
                        const GaussianPrior& prior, const Tensor& rows, int batch,
                        DfmVariant variant, Rng& rng) {
  Tensor xb = sample_batch(rows, batch, rng);
  Tensor yb = prior.sample(static_cast<std::size_t>(batch), rng);
  Tensor t_rows({static_cast<std::size_t>(batch)});
  for (double& t : t_rows.data()) t = rng.uniform();
  Tape tape;
  Tensor vt = theta.eval_rows(tape, t_rows, make_var(xb))->value;
  Tensor vl = lambda.eval_rows(tape, t_rows, make_var(yb))->value;
  return dfm_loss_value(vt, vl, variant);
}

}  // namespace

TrainState train(const TrainOptions& opts, const Tensor& train_rows) {
  opts.validate();
  if (train_rows.ndim() != 2 || train_rows.shape()[0] == 0)
    throw DataError("train: dataset must be a non-empty rank-2 tensor");
  const std::size_t d = train_rows.shape()[1];

  Rng rng(opts.seed);
  Rng init_rng = rng.fork(1);
  Rng batch_rng = rng.fork(2);
  Rng loss_rng = rng.fork(3);
  Rng metric_rng = rng.fork(4);

  TrainState state;
  state.theta = std::make_shared<MlpVectorField>(d, opts.hidden, opts.embed_dim, init_rng,
                                                 opts.init);
  const bool is_dfm = opts.objective == "dfm";
  if (is_dfm)
    state.lambda = std::make_shared<MlpVectorField>(d, opts.hidden, opts.embed_dim, init_rng,
                                                    opts.init);
  state.prior = std::make_shared<GaussianPrior>(d);
  switch (opts.prior_init) {
    case PriorInit::kStandard:
      state.prior->init_standard();
      break;
    case PriorInit::kDataMoments:
      state.prior->init_moments(col_mean(train_rows), col_std(train_rows));
      break;
    case PriorInit::kDataOffset: {
      Tensor m = col_mean(train_rows);
      Tensor s = clamp_min(col_std(train_rows), 1e-8);
      state.prior->init_moments(sub(m, scale(s, opts.prior_offset)), s);
      break;
    }
  }

  std::vector<Var> trainable = state.theta->params();
  if (state.lambda)
    for (const auto& p : state.lambda->params()) trainable.push_back(p);
  if (opts.objective == "mle")
    for (const auto& p : state.prior->params()) trainable.push_back(p);
  Adam opt(trainable, opts.adam);

  const PathSpec cfm_path = objective_path(opts);
  PathSpec warm_path = opts.path;
  warm_path.kind = opts.dfm.warmup_path;
  const int warm_steps =
      is_dfm ? static_cast<int>(std::lround(opts.dfm.warmup_frac * opts.steps)) : 0;

  for (int step = 0; step < opts.steps; ++step) {
    try {
      Tensor xb = sample_batch(train_rows, opts.batch, batch_rng);
      Tape tape;
      zero_grads(trainable);
      Var loss;
      std::string phase;
      if (opts.objective == "mle") {
        phase = "mle";
        loss = mle_loss(tape, *state.theta, *state.prior, xb, opts.mle_euler_steps, opts.trace,
                        loss_rng);
      } else if (!is_dfm) {
        phase = "cfm";
        Tensor x0;
        if (cfm_path.couples_prior())
          x0 = state.prior->sample(static_cast<std::size_t>(opts.batch), loss_rng);
        loss = cfm_loss(tape, *state.theta, cfm_path, xb, x0, loss_rng);
      } else if (step < warm_steps) {
        phase = "cfm_warmup";
        Tensor x0 = state.prior->sample(static_cast<std::size_t>(opts.batch), loss_rng);
        Var lt = cfm_loss(tape, *state.theta, warm_path, xb, x0, loss_rng);
        Tensor x0b = state.prior->sample(static_cast<std::size_t>(opts.batch), loss_rng);
        Var ll = cfm_loss(tape, *state.lambda, warm_path, xb, x0b, loss_rng);
        loss = tape.scale(tape.add(lt, ll), 0.5);
      } else {
        phase = "dfm";
        Tensor yb = state.prior->sample(static_cast<std::size_t>(opts.batch), loss_rng);
        Tensor t_rows({static_cast<std::size_t>(opts.batch)});
        for (double& t : t_rows.data()) t = loss_rng.uniform();
        loss = dfm_loss(tape, *state.theta, *state.lambda, xb, yb, t_rows, opts.dfm.variant);
      }

      const double loss_value = loss->value.item();
      if (!std::isfinite(loss_value))
        throw NumericalError("non-finite loss " + std::to_string(loss_value));
      tape.backward(loss);
      opt.step();

      TrainRecord rec;
      rec.step = step;
      rec.phase = phase;
      rec.loss = loss_value;
      rec.dfm_metric =
          is_dfm ? dfm_metric_value(*state.theta, *state.lambda, *state.prior, train_rows,
                                    opts.batch, opts.dfm.variant, metric_rng)
                 : std::numeric_limits<double>::quiet_NaN();
      state.history.push_back(rec);
      state.step = step + 1;
    } catch (const NumericalError& e) {
      throw NumericalError("train: step " + std::to_string(step) + ": " + e.what());
    }
  }
  state.rng_state = rng.state();
  return state;
}

}  // namespace dualflow
