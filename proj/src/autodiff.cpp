#include "dualflow/autodiff.hpp"

#include <cmath>

#include "dualflow/errors.hpp"

namespace dualflow {

Var make_var(Tensor value, bool requires_grad) {
  return std::make_shared<Node>(std::move(value), requires_grad);
}

void zero_grads(const std::vector<Var>& vars) {
  for (const auto& v : vars) v->zero_grad();
}

void Tape::require_open(const char* who) const {
  if (!open_) throw Error(std::string(who) + ": tape already consumed by backward");
}

Var Tape::emit(Tensor value, std::initializer_list<const Var*> inputs,
               std::function<void()> pull) {
  require_open("tape");
  bool needs = false;
  for (const Var* in : inputs) needs = needs || (*in)->requires_grad;
  Var out = make_var(std::move(value), needs);
  if (needs) records_.push_back({std::move(pull)});
  return out;
}

namespace {
void accum(Tensor& slot, const Tensor& g) {
  auto dst = slot.data();
  const auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}
}  // namespace

Var Tape::add(const Var& a, const Var& b) {
  Var out = emit(dualflow::add(a->value, b->value), {&a, &b}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [a, b, out] {
      if (a->requires_grad) accum(a->grad, out->grad);
      if (b->requires_grad) accum(b->grad, out->grad);
    };
  }
  return out;
}

Var Tape::sub(const Var& a, const Var& b) {
  Var out = emit(dualflow::sub(a->value, b->value), {&a, &b}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [a, b, out] {
      if (a->requires_grad) accum(a->grad, out->grad);
      if (b->requires_grad) accum(b->grad, dualflow::neg(out->grad));
    };
  }
  return out;
}

Var Tape::mul(const Var& a, const Var& b) {
  Var out = emit(dualflow::mul(a->value, b->value), {&a, &b}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [a, b, out] {
      if (a->requires_grad) accum(a->grad, dualflow::mul(out->grad, b->value));
      if (b->requires_grad) accum(b->grad, dualflow::mul(out->grad, a->value));
    };
  }
  return out;
}

Var Tape::divide(const Var& a, const Var& b) {
  Var out = emit(dualflow::divide(a->value, b->value), {&a, &b}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [a, b, out] {
      if (a->requires_grad) accum(a->grad, dualflow::divide(out->grad, b->value));
      if (b->requires_grad) {
        // d/db (a/b) = -a/b^2 = -y/b
        Tensor g = dualflow::divide(dualflow::mul(out->grad, out->value), b->value);
        accum(b->grad, dualflow::neg(g));
      }
    };
  }
  return out;
}

Var Tape::matmul(const Var& a, const Var& b) {
  Var out = emit(dualflow::matmul(a->value, b->value), {&a, &b}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [a, b, out] {
      if (a->requires_grad)
        accum(a->grad, dualflow::matmul(out->grad, dualflow::transpose(b->value)));
      if (b->requires_grad)
        accum(b->grad, dualflow::matmul(dualflow::transpose(a->value), out->grad));
    };
  }
  return out;
}

Var Tape::affine(const Var& x, const Var& w, const Var& b) {
  Var out = emit(dualflow::affine(x->value, w->value, b->value), {&x, &w, &b}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, w, b, out] {
      if (x->requires_grad)
        accum(x->grad, dualflow::matmul(out->grad, dualflow::transpose(w->value)));
      if (w->requires_grad)
        accum(w->grad, dualflow::matmul(dualflow::transpose(x->value), out->grad));
      if (b->requires_grad) accum(b->grad, dualflow::col_sum(out->grad));
    };
  }
  return out;
}

Var Tape::tanh(const Var& x) {
  Var out = emit(dualflow::tanh_of(x->value), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] {
      Tensor one_minus_y2 = dualflow::add_const(dualflow::neg(dualflow::square(out->value)), 1.0);
      accum(x->grad, dualflow::mul(out->grad, one_minus_y2));
    };
  }
  return out;
}

Var Tape::softplus(const Var& x) {
  Var out = emit(dualflow::softplus(x->value), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] {
      Tensor sig(x->value.shape());
      const auto in = x->value.data();
      auto dst = sig.data();
      for (std::size_t i = 0; i < in.size(); ++i) dst[i] = 1.0 / (1.0 + std::exp(-in[i]));
      accum(x->grad, dualflow::mul(out->grad, sig));
    };
  }
  return out;
}

Var Tape::exp(const Var& x) {
  Var out = emit(dualflow::exp_of(x->value), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] { accum(x->grad, dualflow::mul(out->grad, out->value)); };
  }
  return out;
}

Var Tape::log(const Var& x) {
  Var out = emit(dualflow::log_of(x->value), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] { accum(x->grad, dualflow::divide(out->grad, x->value)); };
  }
  return out;
}

Var Tape::square(const Var& x) {
  Var out = emit(dualflow::square(x->value), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] {
      accum(x->grad, dualflow::mul(out->grad, dualflow::scale(x->value, 2.0)));
    };
  }
  return out;
}

Var Tape::sqrt(const Var& x) {
  Var out = emit(dualflow::sqrt_of(x->value), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] {
      accum(x->grad, dualflow::divide(out->grad, dualflow::scale(out->value, 2.0)));
    };
  }
  return out;
}

Var Tape::neg(const Var& x) {
  Var out = emit(dualflow::neg(x->value), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] { accum(x->grad, dualflow::neg(out->grad)); };
  }
  return out;
}

Var Tape::scale(const Var& x, double c) {
  Var out = emit(dualflow::scale(x->value, c), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out, c] { accum(x->grad, dualflow::scale(out->grad, c)); };
  }
  return out;
}

Var Tape::add_const(const Var& x, double c) {
  Var out = emit(dualflow::add_const(x->value, c), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] { accum(x->grad, out->grad); };
  }
  return out;
}

Var Tape::clamp_min(const Var& x, double floor) {
  Var out = emit(dualflow::clamp_min(x->value, floor), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out, floor] {
      Tensor g = Tensor::zeros(x->value.shape());
      const auto in = x->value.data();
      const auto og = out->grad.data();
      auto dst = g.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = in[i] >= floor ? og[i] : 0.0;
      accum(x->grad, g);
    };
  }
  return out;
}

Var Tape::sum(const Var& x) {
  Var out = emit(Tensor::scalar(dualflow::sum(x->value)), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] {
      accum(x->grad, Tensor::full(x->value.shape(), out->grad[0]));
    };
  }
  return out;
}

Var Tape::mean(const Var& x) {
  const double inv_n = 1.0 / static_cast<double>(x->value.size());
  Var out = emit(Tensor::scalar(dualflow::mean(x->value)), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out, inv_n] {
      accum(x->grad, Tensor::full(x->value.shape(), out->grad[0] * inv_n));
    };
  }
  return out;
}

Var Tape::row_sum(const Var& x) {
  Var out = emit(dualflow::row_sum(x->value), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] {
      const std::size_t n = x->value.shape()[0], d = x->value.shape()[1];
      Tensor g({n, d});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g.at(i, j) = out->grad[i];
      accum(x->grad, g);
    };
  }
  return out;
}

Var Tape::concat_cols(const Var& a, const Var& b) {
  Var out = emit(dualflow::concat_cols(a->value, b->value), {&a, &b}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [a, b, out] {
      const std::size_t da = a->value.shape()[1];
      const std::size_t d = out->grad.shape()[1];
      if (a->requires_grad) accum(a->grad, dualflow::slice_cols(out->grad, 0, da));
      if (b->requires_grad) accum(b->grad, dualflow::slice_cols(out->grad, da, d));
    };
  }
  return out;
}

Var Tape::slice_cols(const Var& x, std::size_t lo, std::size_t hi) {
  Var out = emit(dualflow::slice_cols(x->value, lo, hi), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out, lo, hi] {
      Tensor g = Tensor::zeros(x->value.shape());
      const std::size_t n = x->value.shape()[0];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = lo; j < hi; ++j) g.at(i, j) = out->grad.at(i, j - lo);
      accum(x->grad, g);
    };
  }
  return out;
}

Var Tape::add_rowvec(const Var& x, const Var& v) {
  Var out = emit(dualflow::add_rowvec(x->value, v->value), {&x, &v}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, v, out] {
      if (x->requires_grad) accum(x->grad, out->grad);
      if (v->requires_grad) accum(v->grad, dualflow::col_sum(out->grad));
    };
  }
  return out;
}

Var Tape::mul_rowvec(const Var& x, const Var& v) {
  Var out = emit(dualflow::mul_rowvec(x->value, v->value), {&x, &v}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, v, out] {
      if (x->requires_grad) accum(x->grad, dualflow::mul_rowvec(out->grad, v->value));
      if (v->requires_grad)
        accum(v->grad, dualflow::col_sum(dualflow::mul(out->grad, x->value)));
    };
  }
  return out;
}

Var Tape::scale_rows(const Var& x, const Var& s) {
  Var out = emit(dualflow::scale_rows(x->value, s->value), {&x, &s}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, s, out] {
      if (x->requires_grad) accum(x->grad, dualflow::scale_rows(out->grad, s->value));
      if (s->requires_grad)
        accum(s->grad, dualflow::row_sum(dualflow::mul(out->grad, x->value)));
    };
  }
  return out;
}

Var Tape::add_scalar(const Var& x, const Var& s) {
  if (s->value.size() != 1)
    throw ShapeError("add_scalar: broadcast operand of shape " + s->value.shape_str() +
                     " is not a scalar");
  Var out = emit(dualflow::add_const(x->value, s->value[0]), {&x, &s}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, s, out] {
      if (x->requires_grad) accum(x->grad, out->grad);
      if (s->requires_grad) accum(s->grad, Tensor::scalar(dualflow::sum(out->grad)));
    };
  }
  return out;
}

Var Tape::l2norm(const Var& x) {
  Var out = emit(Tensor::scalar(dualflow::l2_norm(x->value)), {&x}, nullptr);
  if (out->requires_grad) {
    records_.back().pull = [x, out] {
      const double norm = out->value[0];
      if (norm == 0.0) return;  // subgradient 0 at the origin
      accum(x->grad, dualflow::scale(x->value, out->grad[0] / norm));
    };
  }
  return out;
}

void Tape::backward(const Var& loss) {
  if (loss->value.size() != 1)
    throw ShapeError("backward: loss of shape " + loss->value.shape_str() + " is not a scalar");
  backward_seeded(loss, Tensor::scalar(1.0));
}

void Tape::backward_seeded(const Var& out, const Tensor& seed) {
  require_open("backward");
  if (!seed.same_shape(out->value))
    throw ShapeError("backward: seed shape " + seed.shape_str() + " does not match output " +
                     out->value.shape_str());
  open_ = false;
  accum(out->grad, seed);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->pull) it->pull();
  }
  records_.clear();
}

Tensor vjp(const TapedFn& f, const Tensor& x, const Tensor& v) {
  Tape tape;
  Var xv = make_var(x, /*requires_grad=*/true);
  Var y = f(tape, xv);
  if (!v.same_shape(y->value))
    throw ShapeError("vjp: cotangent shape " + v.shape_str() + " does not match output " +
                     y->value.shape_str());
  tape.backward_seeded(y, v);
  return xv->grad;
}

}  // namespace dualflow
