#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dualflow/tensor.hpp"

namespace dualflow {

// A value in the computation graph together with its gradient slot.
// Long-lived nodes (parameters) survive across tapes; intermediates are
// owned by the tape records that produced them.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;

  explicit Node(Tensor v, bool req = false)
      : value(std::move(v)), grad(Tensor::zeros(value.shape())), requires_grad(req) {}

  void zero_grad() { grad = Tensor::zeros(value.shape()); }
};

using Var = std::shared_ptr<Node>;

// Leaf node not attached to any tape. Parameters are leaves with
// requires_grad = true; constants are leaves without.
Var make_var(Tensor value, bool requires_grad = false);

void zero_grads(const std::vector<Var>& vars);

// Ordered record of primitive operations. Replaying the records backward
// visits nodes in reverse topological order. A tape consumed by backward()
// is closed and rejects further recording or replay.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool open() const { return open_; }
  std::size_t num_records() const { return records_.size(); }

  // Primitive forward ops. Each computes the value with the plain tensor
  // kernel and, when any input requires grad, records the pull-back.
  Var add(const Var& a, const Var& b);
  Var sub(const Var& a, const Var& b);
  Var mul(const Var& a, const Var& b);
  Var divide(const Var& a, const Var& b);
  Var matmul(const Var& a, const Var& b);
  Var affine(const Var& x, const Var& w, const Var& b);
  Var tanh(const Var& x);
  Var softplus(const Var& x);
  Var exp(const Var& x);
  Var log(const Var& x);
  Var square(const Var& x);
  Var sqrt(const Var& x);
  Var neg(const Var& x);
  Var scale(const Var& x, double c);
  Var add_const(const Var& x, double c);
  Var clamp_min(const Var& x, double floor);
  Var sum(const Var& x);
  Var mean(const Var& x);
  Var row_sum(const Var& x);
  Var concat_cols(const Var& a, const Var& b);
  Var slice_cols(const Var& x, std::size_t lo, std::size_t hi);
  Var add_rowvec(const Var& x, const Var& v);
  Var mul_rowvec(const Var& x, const Var& v);
  Var scale_rows(const Var& x, const Var& s);
  Var add_scalar(const Var& x, const Var& s);  // broadcast 1-element s
  Var l2norm(const Var& x);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // reachable node. Requires a scalar on an open tape; closes the tape.
  void backward(const Var& loss);

  // Generalized backward with an explicit cotangent for a non-scalar output.
  void backward_seeded(const Var& out, const Tensor& seed);

 private:
  struct Record {
    std::function<void()> pull;
  };

  void require_open(const char* who) const;
  Var emit(Tensor value, std::initializer_list<const Var*> inputs,
           std::function<void()> pull);

  std::vector<Record> records_;
  bool open_ = true;
};

// vᵀ(∂f/∂x) without materializing the Jacobian. f builds its output from
// x on the supplied tape.
using TapedFn = std::function<Var(Tape&, const Var&)>;
Tensor vjp(const TapedFn& f, const Tensor& x, const Tensor& v);

}  // namespace dualflow
