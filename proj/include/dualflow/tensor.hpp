#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dualflow/rng.hpp"

namespace dualflow {

// Dense row-major tensor of 64-bit floats. Rank 1 and rank 2 are the only
// shapes the library uses; rank 2 is (rows, cols) with cols the feature axis.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor ones(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor row(std::vector<double> values);  // shape {n}

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors; rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double item() const;  // requires size() == 1
  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  Tensor reshaped(std::vector<std::size_t> shape) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_to_string(const std::vector<std::size_t>& s);

// Throws NumericalError naming `op` when t contains NaN or Inf.
void ensure_finite(const char* op, const Tensor& t);

// Elementwise kernels. All validate shapes (ShapeError naming the primitive)
// and check the result for NaN/Inf (NumericalError).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor tanh_of(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp_of(const Tensor& a);
Tensor log_of(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt_of(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);

// Matrix / broadcast kernels.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);  // x*w + b
Tensor add_rowvec(const Tensor& x, const Tensor& v);               // x[i,:] + v
Tensor mul_rowvec(const Tensor& x, const Tensor& v);               // x[i,:] * v
Tensor scale_rows(const Tensor& x, const Tensor& s);               // x[i,:] * s[i]
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi);
Tensor slice_rows(const Tensor& x, std::size_t lo, std::size_t hi);

// Reductions.
double sum(const Tensor& a);
double mean(const Tensor& a);
Tensor row_sum(const Tensor& x);  // {n,d} -> {n}
Tensor col_sum(const Tensor& x);  // {n,d} -> {d}
Tensor col_mean(const Tensor& x);
Tensor col_std(const Tensor& x);  // population std
double l2_norm(const Tensor& a);
Tensor row_l2_norm(const Tensor& x);
double dot(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);

// Random fills (consume `rng` row-major).
Tensor randn(std::vector<std::size_t> shape, Rng& rng);
Tensor rand_uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng);
Tensor rademacher(std::vector<std::size_t> shape, Rng& rng);

}  // namespace dualflow
