#pragma once

// Test-only oracles: finite differences, brute-force metrics and analytic
// fields kept independent of the implementation paths they check.

#include <cmath>
#include <functional>

#include "dualflow/autodiff.hpp"
#include "dualflow/tensor.hpp"
#include "dualflow/vfmodel.hpp"

namespace dualflow::testing {

// Central finite differences of a scalar functional.
inline Tensor fd_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                      double h = 1e-5) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Dense Jacobian of a vector map by central differences; rows index
// outputs, columns index inputs.
inline Tensor fd_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                          double h = 1e-5) {
  Tensor y0 = f(x);
  Tensor jac({y0.size(), x.size()});
  Tensor probe = x;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double saved = probe[j];
    probe[j] = saved + h;
    Tensor up = f(probe);
    probe[j] = saved - h;
    Tensor down = f(probe);
    probe[j] = saved;
    for (std::size_t i = 0; i < y0.size(); ++i) jac.at(i, j) = (up[i] - down[i]) / (2.0 * h);
  }
  return jac;
}

// max_i |a_i - b_i| / max(|b_i|, 1): relative for large entries, absolute
// near zero.
inline double max_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(std::abs(b[i]), 1.0);
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Energy distance 2 E||x-y|| - E||x-x'|| - E||y-y'|| between point sets.
inline double energy_distance(const Tensor& a, const Tensor& b) {
  const std::size_t na = a.shape()[0], nb = b.shape()[0], d = a.shape()[1];
  auto pair_dist = [d](const Tensor& u, std::size_t i, const Tensor& v, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = u.at(i, k) - v.at(j, k);
      s += diff * diff;
    }
    return std::sqrt(s);
  };
  double cross = 0.0, within_a = 0.0, within_b = 0.0;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) cross += pair_dist(a, i, b, j);
  cross /= static_cast<double>(na) * static_cast<double>(nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j) within_a += pair_dist(a, i, a, j);
  within_a /= static_cast<double>(na) * static_cast<double>(na);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) within_b += pair_dist(b, i, b, j);
  within_b /= static_cast<double>(nb) * static_cast<double>(nb);
  return 2.0 * cross - within_a - within_b;
}

// v(t, x) = a * x; the flow is x e^{a t} with divergence a*D.
class AffineField : public FlowField {
 public:
  AffineField(double a, std::size_t dim) : a_(a), dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  Var eval(Tape& tape, double, const Var& x) const override { return tape.scale(x, a_); }
  Var eval_rows(Tape& tape, const Tensor&, const Var& x) const override {
    return tape.scale(x, a_);
  }
  std::pair<Var, Var> eval_jvp(Tape& tape, double, const Var& x,
                               const Tensor& dx) const override {
    return {tape.scale(x, a_), make_var(scale(dx, a_))};
  }

 private:
  double a_;
  std::size_t dim_;
};

// v(t, x) = x A^T per row, i.e. v = A x in column convention.
class LinearField : public FlowField {
 public:
  explicit LinearField(Tensor a) : at_(transpose(a)), dim_(a.shape()[0]) {}
  std::size_t dim() const override { return dim_; }
  Var eval(Tape& tape, double, const Var& x) const override {
    return tape.matmul(x, make_var(at_));
  }
  Var eval_rows(Tape& tape, const Tensor&, const Var& x) const override {
    return tape.matmul(x, make_var(at_));
  }

 private:
  Tensor at_;
  std::size_t dim_;
};

class ConstantField : public FlowField {
 public:
  explicit ConstantField(Tensor v) : v_(std::move(v)) {}
  std::size_t dim() const override { return v_.size(); }
  Var eval(Tape& tape, double, const Var& x) const override {
    const std::size_t n = x->value.shape()[0];
    Tensor rows({n, v_.size()});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < v_.size(); ++j) rows.at(i, j) = v_[j];
    return tape.add(tape.scale(x, 0.0), make_var(rows));
  }
  Var eval_rows(Tape& tape, const Tensor&, const Var& x) const override {
    return eval(tape, 0.0, x);
  }

 private:
  Tensor v_;
};

// Diagonal Jacobian: v_j(x) = c_j * x_j.
class DiagField : public FlowField {
 public:
  explicit DiagField(Tensor coeffs) : coeffs_(std::move(coeffs)) {}
  std::size_t dim() const override { return coeffs_.size(); }
  Var eval(Tape& tape, double, const Var& x) const override {
    return tape.mul_rowvec(x, make_var(coeffs_));
  }

 private:
  Tensor coeffs_;
};

// Traceless rotation [-x1, x0].
class RotationField : public FlowField {
 public:
  std::size_t dim() const override { return 2; }
  Var eval(Tape& tape, double, const Var& x) const override {
    Var x0 = tape.slice_cols(x, 0, 1);
    Var x1 = tape.slice_cols(x, 1, 2);
    return tape.concat_cols(tape.neg(x1), x0);
  }
};

}  // namespace dualflow::testing
