#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dualflow/data.hpp"
#include "dualflow/errors.hpp"
#include "dualflow/objectives.hpp"
#include "support/oracles.hpp"

using namespace dualflow;
namespace oracle = dualflow::testing;

namespace {

// v(t, x) = p0 * x + p1 in one dimension; two trainable scalars.
class TwoParamField : public FlowField {
 public:
  TwoParamField(double slope, double offset)
      : slope_(make_var(Tensor({1}, {slope}), true)),
        offset_(make_var(Tensor({1}, {offset}), true)) {}
  std::size_t dim() const override { return 1; }
  Var eval(Tape& tape, double, const Var& x) const override {
    return tape.add_rowvec(tape.mul_rowvec(x, slope_), offset_);
  }
  Var eval_rows(Tape& tape, const Tensor&, const Var& x) const override {
    return tape.add_rowvec(tape.mul_rowvec(x, slope_), offset_);
  }
  std::vector<Var> params() const { return {slope_, offset_}; }

 private:
  Var slope_, offset_;
};

SolverConfig tight_dopri() {
  SolverConfig cfg;
  cfg.method = SolverConfig::Method::kDopri5;
  cfg.atol = 1e-10;
  cfg.rtol = 1e-10;
  return cfg;
}

}  // namespace

TEST_CASE("mle loss: identity flow at the prior mode") {
  for (std::size_t d : {std::size_t{1}, std::size_t{3}}) {
    Rng rng(0);
    MlpVectorField model(d, {8}, 4, rng);  // zero flow
    GaussianPrior prior(d);
    Tensor batch = Tensor::zeros({4, d});
    Tape tape;
    Var loss = mle_loss(tape, model, prior, batch, 8, TraceEstimator::exact(), rng);
    CHECK(loss->value.item() ==
          doctest::Approx(0.9189385332046727 * static_cast<double>(d)).epsilon(1e-10));
  }
}

TEST_CASE("mle loss on the injected affine flow") {
  const double a = 0.5;
  oracle::AffineField field(a, 1);
  GaussianPrior prior(1);
  Tensor batch({3, 1}, {0.4, -1.1, 2.0});
  Rng rng(1);

  auto closed_form_nll = [&](int n_steps) {
    // The Euler traversal of v = a x from t=1 to 0 lands exactly on
    // x (1 - a/N)^N with accumulated divergence a.
    const double r = std::pow(1.0 - a / n_steps, n_steps);
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double x0 = batch[i] * r;
      const double logp = -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * x0 * x0;
      total += -(logp - a);
    }
    return total / 3.0;
  };

  // Machinery is exact against the discretized closed form.
  for (int n_steps : {16, 1024}) {
    Tape tape;
    Var loss = mle_loss(tape, field, prior, batch, n_steps, TraceEstimator::exact(), rng);
    CHECK(loss->value.item() == doctest::Approx(closed_form_nll(n_steps)).epsilon(1e-12));
  }

  // And converges at first order to the continuous change of variables.
  double analytic = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double x0 = batch[i] * std::exp(-a);
    analytic += -(-0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * x0 * x0 - a);
  }
  analytic /= 3.0;
  double prev = 0.0;
  for (int n_steps : {256, 512, 1024}) {
    Tape tape;
    Var loss = mle_loss(tape, field, prior, batch, n_steps, TraceEstimator::exact(), rng);
    const double err = std::abs(loss->value.item() - analytic);
    if (n_steps > 256) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.1));
    prev = err;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("mle training shifts a 1-D model toward the data") {
  Rng data_rng(3);
  Tensor data = add_const(randn({512, 1}, data_rng), 2.0);  // N(2, 1)
  TrainOptions opts;
  opts.objective = "mle";
  opts.hidden = {16};
  opts.embed_dim = 4;
  opts.batch = 64;
  opts.steps = 200;
  opts.mle_euler_steps = 8;
  opts.trace = TraceEstimator::exact();
  opts.seed = 0;
  TrainState state = train(opts, data);
  const double first = state.history.front().loss;
  const double last = state.history.back().loss;
  CHECK(last < first);
}

TEST_CASE("cfm loss: analytically matched field gives exactly zero") {
  // Icfm with constant conditioning: u = x1 - x0 for every row and sample.
  Tensor x0 = Tensor::full({32, 2}, 0.25);
  Tensor x1({2}, {1.25, -0.75});
  Tensor x1s({32, 2});
  for (std::size_t i = 0; i < 32; ++i) {
    x1s.at(i, 0) = x1[0];
    x1s.at(i, 1) = x1[1];
  }
  oracle::ConstantField field(Tensor({2}, {1.0, -1.0}));  // x1 - x0 per coordinate
  PathSpec icfm{PathKind::kIcfm, 0.01, 0.1};
  Rng rng(7);
  Tape tape;
  Var loss = cfm_loss(tape, field, icfm, x1s, x0, rng);
  CHECK(loss->value.item() == doctest::Approx(0.0));
}

TEST_CASE("cfm loss of the zero model on the rectified path") {
  Rng rng(5);
  const std::size_t n = 4096;
  Tensor x1 = gen_two_moons(n, 0.05, 9);
  GaussianPrior prior(2);
  Tensor x0 = prior.sample(n, rng);

  Rng init(0);
  MlpVectorField zero_field(2, {8}, 4, init);
  PathSpec rect{PathKind::kRectified};
  Tape tape;
  Rng loss_rng(11);
  Var loss = cfm_loss(tape, zero_field, rect, x1, x0, loss_rng);

  // Oracle: sample mean and standard error of ||x1 - x0||^2. The rectified
  // target is x1 - x0 regardless of the path sample, so the loss matches
  // the sample mean exactly and the population mean statistically.
  double mean_sq = 0.0, var_acc = 0.0;
  std::vector<double> draws(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      const double diff = x1.at(i, j) - x0.at(i, j);
      s += diff * diff;
    }
    draws[i] = s;
    mean_sq += s;
  }
  mean_sq /= static_cast<double>(n);
  CHECK(loss->value.item() == doctest::Approx(mean_sq).epsilon(1e-9));

  for (double v : draws) var_acc += (v - mean_sq) * (v - mean_sq);
  const double se = std::sqrt(var_acc / n) / std::sqrt(static_cast<double>(n));
  double population = 2.0;  // E||x0||^2 for the standard prior
  for (std::size_t i = 0; i < n; ++i)
    population += (x1.at(i, 0) * x1.at(i, 0) + x1.at(i, 1) * x1.at(i, 1)) / n;
  CHECK(std::abs(mean_sq - population) < 3.0 * se);
}

TEST_CASE("cfm gradients match finite differences on a 2-parameter model") {
  Tensor x1({8, 1}, {0.1, -0.4, 1.2, 0.8, -1.1, 0.3, 0.0, 2.0});
  Tensor x0({8, 1}, {0.9, 0.2, -0.3, 0.5, 1.4, -0.8, 0.6, -1.5});
  PathSpec icfm{PathKind::kIcfm, 0.01, 0.1};

  auto loss_at = [&](double slope, double offset) {
    TwoParamField field(slope, offset);
    Tape tape;
    Rng rng(21);  // identical draws every evaluation
    return cfm_loss(tape, field, icfm, x1, x0, rng)->value.item();
  };

  TwoParamField field(0.3, -0.2);
  Tape tape;
  Rng rng(21);
  Var loss = cfm_loss(tape, field, icfm, x1, x0, rng);
  tape.backward(loss);
  auto params = field.params();

  const double h = 1e-6;
  const double g_slope = (loss_at(0.3 + h, -0.2) - loss_at(0.3 - h, -0.2)) / (2 * h);
  const double g_offset = (loss_at(0.3, -0.2 + h) - loss_at(0.3, -0.2 - h)) / (2 * h);
  CHECK(params[0]->grad[0] == doctest::Approx(g_slope).epsilon(1e-5));
  CHECK(params[1]->grad[0] == doctest::Approx(g_offset).epsilon(1e-5));
}

TEST_CASE("dfm loss closed forms") {
  // Identical rows align perfectly.
  Tensor v({3, 2}, {1, 0, 0.5, 0.5, -2, 1});
  CHECK(dfm_loss_value(v, v, DfmVariant::kCosPair) == doctest::Approx(0.0).epsilon(1e-12));

  // Orthogonal rows contribute 1 each.
  Tensor a({1, 2}, {1.0, 0.0});
  Tensor b({1, 2}, {0.0, 1.0});
  CHECK(dfm_loss_value(a, b, DfmVariant::kCosPair) == doctest::Approx(1.0));

  // 1-D reciprocal pair satisfies the product-of-ones identity.
  Tensor two({1, 1}, {2.0});
  Tensor half({1, 1}, {0.5});
  CHECK(dfm_loss_value(two, half, DfmVariant::kCosProductOnes) == doctest::Approx(0.0));

  // Multivariate reciprocal rows too.
  Tensor vt({1, 3}, {2.0, 4.0, 0.5});
  Tensor vl({1, 3}, {0.5, 0.25, 2.0});
  CHECK(dfm_loss_value(vt, vl, DfmVariant::kCosProductOnes) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dfm loss is exactly invariant to positive row rescaling") {
  Rng rng(13);
  Tensor vt = randn({16, 4}, rng);
  Tensor vl = randn({16, 4}, rng);
  for (DfmVariant variant : {DfmVariant::kCosPair, DfmVariant::kCosProductOnes}) {
    const double base = dfm_loss_value(vt, vl, variant);
    for (double c : {2.0, 3.14159, 1e-3}) {
      CHECK(std::abs(dfm_loss_value(scale(vt, c), vl, variant) - base) < 1e-12);
      CHECK(std::abs(dfm_loss_value(vt, scale(vl, c), variant) - base) < 1e-12);
    }
  }
}

TEST_CASE("dfm loss range and zero-norm floor") {
  Tensor zero = Tensor::zeros({4, 3});
  Rng rng(1);
  Tensor v = randn({4, 3}, rng);
  const double l = dfm_loss_value(zero, v, DfmVariant::kCosPair);
  CHECK(l == doctest::Approx(1.0));  // floored zero rows are orthogonal to everything
  const double anti = dfm_loss_value(v, scale(v, -1.0), DfmVariant::kCosPair);
  CHECK(anti == doctest::Approx(2.0));
  CHECK(l >= 0.0);
  CHECK(anti <= 2.0);
}

TEST_CASE("dfm gradients reach both fields") {
  Rng rng(17);
  MlpVectorField theta(2, {8}, 4, rng, FieldInit::kRandom);
  MlpVectorField lambda(2, {8}, 4, rng, FieldInit::kRandom);
  Tensor xb = randn({8, 2}, rng);
  Tensor yb = randn({8, 2}, rng);
  Tensor t_rows = rand_uniform({8}, 0.0, 1.0, rng);
  Tape tape;
  auto all_params = theta.params();
  for (auto& p : lambda.params()) all_params.push_back(p);
  zero_grads(all_params);
  Var loss = dfm_loss(tape, theta, lambda, xb, yb, t_rows, DfmVariant::kCosPair);
  tape.backward(loss);
  double g_theta = 0.0, g_lambda = 0.0;
  for (auto& p : theta.params()) g_theta += l2_norm(p->grad);
  for (auto& p : lambda.params()) g_lambda += l2_norm(p->grad);
  CHECK(g_theta > 0.0);
  CHECK(g_lambda > 0.0);
}

TEST_CASE("bijectivity residual") {
  // Identity maps round-trip exactly.
  Rng rng(0);
  MlpVectorField zero_theta(2, {8}, 4, rng);
  MlpVectorField zero_lambda(2, {8}, 4, rng);
  Tensor x = randn({6, 2}, rng);
  CHECK(bijectivity_residual(zero_theta, zero_lambda, x, tight_dopri()) ==
        doctest::Approx(0.0));

  // A matched affine pair inverts itself within solver tolerance.
  oracle::AffineField fwd(0.8, 2);
  oracle::AffineField rev(0.8, 2);
  CHECK(bijectivity_residual(fwd, rev, x, tight_dopri()) < 1e-8);

  // Generic random fields do not.
  MlpVectorField rand_theta(2, {8}, 4, rng, FieldInit::kRandom);
  MlpVectorField rand_lambda(2, {8}, 4, rng, FieldInit::kRandom);
  CHECK(bijectivity_residual(rand_theta, rand_lambda, x, tight_dopri()) > 1e-4);
}

TEST_CASE("train: zero learning rate freezes parameters") {
  Rng rng(2);
  Tensor data = randn({128, 2}, rng);
  TrainOptions opts;
  opts.objective = "icfm";
  opts.hidden = {8};
  opts.embed_dim = 4;
  opts.adam.lr = 0.0;
  opts.batch = 32;
  opts.steps = 10;
  opts.init = FieldInit::kRandom;
  opts.seed = 4;
  TrainState state = train(opts, data);

  Rng rng2(4);
  Rng ref_init = rng2.fork(1);
  MlpVectorField reference(2, {8}, 4, ref_init, FieldInit::kRandom);
  auto got = state.theta->params();
  auto want = reference.params();
  for (std::size_t i = 0; i < got.size(); ++i)
    for (std::size_t j = 0; j < got[i]->value.size(); ++j)
      CHECK(got[i]->value[j] == want[i]->value[j]);
}

TEST_CASE("train: identical seeds give bit-identical loss histories") {
  Rng rng(8);
  Tensor data = randn({256, 2}, rng);
  TrainOptions opts;
  opts.objective = "dfm";
  opts.hidden = {8};
  opts.embed_dim = 4;
  opts.batch = 32;
  opts.steps = 30;
  opts.dfm.warmup_frac = 0.5;
  opts.seed = 123;
  TrainState a = train(opts, data);
  TrainState b = train(opts, data);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].dfm_metric == b.history[i].dfm_metric);
    CHECK(a.history[i].phase == b.history[i].phase);
  }
}

TEST_CASE("train: non-finite loss aborts with the step index") {
  Tensor data = Tensor::full({64, 1}, 1e160);
  TrainOptions opts;
  opts.objective = "icfm";
  opts.hidden = {8};
  opts.embed_dim = 4;
  opts.batch = 16;
  opts.steps = 5;
  opts.seed = 0;
  try {
    train(opts, data);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("dfm training on a windowed 1-D task improves bijectivity") {
  // 1-D series -> width-8 windows; random nonzero fields to start.
  RawSeries series = gen_telemetry(2000, 1, 0.0, 5);
  WindowedDataset wd = make_windows(series, 8);
  Normalizer norm = Normalizer::fit(wd.windows);
  Tensor rows = norm.transform(wd.windows);

  // Pure cosine phase: alignment of the two fields is what shrinks the
  // round-trip error from a random start.
  TrainOptions opts;
  opts.objective = "dfm";
  opts.hidden = {32};
  opts.embed_dim = 4;
  opts.batch = 64;
  opts.steps = 400;
  opts.dfm.warmup_frac = 0.0;
  opts.init = FieldInit::kRandom;
  opts.seed = 0;

  // Reference models share the init stream with train().
  Rng ref(0);
  Rng init_rng = ref.fork(1);
  MlpVectorField theta0(8, {32}, 4, init_rng, FieldInit::kRandom);
  MlpVectorField lambda0(8, {32}, 4, init_rng, FieldInit::kRandom);

  SolverConfig cfg;
  cfg.method = SolverConfig::Method::kDopri5;
  cfg.atol = 1e-6;
  cfg.rtol = 1e-6;
  Tensor probe = slice_rows(rows, 0, 128);
  const double before = bijectivity_residual(theta0, lambda0, probe, cfg);

  TrainState state = train(opts, rows);
  const double after = bijectivity_residual(*state.theta, *state.lambda, probe, cfg);
  CHECK(after < 0.5 * before);
}
