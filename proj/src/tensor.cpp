#include "dualflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dualflow/errors.hpp"

namespace dualflow {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                   " do not conform");
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a) {
  throw ShapeError(std::string(op) + ": shape " + a.shape_str() + " not supported");
}

template <typename F>
Tensor unary(const char* op, const Tensor& a, F f) {
  Tensor out(a.shape());
  const auto in = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) dst[i] = f(in[i]);
  ensure_finite(op, out);
  return out;
}

template <typename F>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f) {
  if (!a.same_shape(b)) shape_fail(op, a, b);
  Tensor out(a.shape());
  const auto x = a.data();
  const auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  ensure_finite(op, out);
  return out;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
  for (std::size_t e : shape_) {
    if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_to_string(shape_));
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + shape_to_string(shape_) + " expects " +
                     std::to_string(shape_product(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::ones(std::vector<std::size_t> shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (ndim() == 2) return shape_[0];
  if (ndim() == 1) return 1;
  throw ShapeError("rows: shape " + shape_str() + " is not rank 1 or 2");
}

std::size_t Tensor::cols() const {
  if (ndim() == 2) return shape_[1];
  if (ndim() == 1) return shape_[0];
  throw ShapeError("cols: shape " + shape_str() + " is not rank 1 or 2");
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + shape_str() + " is not a scalar");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (shape_product(shape) != size()) {
    throw ShapeError("reshape: cannot view " + shape_str() + " as " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), std::vector<double>(data_.begin(), data_.end()));
}

std::string shape_to_string(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

void ensure_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) {
    throw NumericalError(std::string(op) + ": produced NaN/Inf in tensor of shape " +
                         t.shape_str());
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  return binary("divide", a, b, [](double x, double y) { return x / y; });
}

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; });
}

Tensor scale(const Tensor& a, double c) {
  return unary("scale", a, [c](double x) { return c * x; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary("add_const", a, [c](double x) { return x + c; });
}

Tensor tanh_of(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); });
}

Tensor softplus(const Tensor& a) {
  // log(1 + e^x), overflow-safe for large |x|.
  return unary("softplus", a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
}

Tensor exp_of(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); });
}

Tensor log_of(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; });
}

Tensor sqrt_of(const Tensor& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary("clamp_min", a, [floor](double x) { return x < floor ? floor : x; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) shape_fail("matmul", a, b);
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  Tensor out({n, m});
  const auto pa = a.data();
  const auto pb = b.data();
  auto pc = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const std::size_t bo = p * m, co = i * m;
      for (std::size_t j = 0; j < m; ++j) pc[co + j] += aip * pb[bo + j];
    }
  }
  ensure_finite("matmul", out);
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) shape_fail("transpose", a);
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1 || x.shape()[1] != w.shape()[0] ||
      w.shape()[1] != b.shape()[0]) {
    throw ShapeError("affine: shapes " + x.shape_str() + ", " + w.shape_str() + ", " +
                     b.shape_str() + " do not conform");
  }
  const std::size_t n = x.shape()[0], k = x.shape()[1], m = w.shape()[1];
  Tensor out({n, m});
  const auto px = x.data();
  const auto pw = w.data();
  const auto pb = b.data();
  auto pc = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t co = i * m;
    for (std::size_t j = 0; j < m; ++j) pc[co + j] = pb[j];
    for (std::size_t p = 0; p < k; ++p) {
      const double xip = px[i * k + p];
      if (xip == 0.0) continue;
      const std::size_t wo = p * m;
      for (std::size_t j = 0; j < m; ++j) pc[co + j] += xip * pw[wo + j];
    }
  }
  ensure_finite("affine", out);
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  if (x.ndim() != 2 || v.ndim() != 1 || x.shape()[1] != v.shape()[0])
    shape_fail("add_rowvec", x, v);
  Tensor out(x.shape());
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) + v[j];
  ensure_finite("add_rowvec", out);
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  if (x.ndim() != 2 || v.ndim() != 1 || x.shape()[1] != v.shape()[0])
    shape_fail("mul_rowvec", x, v);
  Tensor out(x.shape());
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) * v[j];
  ensure_finite("mul_rowvec", out);
  return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  if (x.ndim() != 2 || s.ndim() != 1 || x.shape()[0] != s.shape()[0])
    shape_fail("scale_rows", x, s);
  Tensor out(x.shape());
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) * s[i];
  ensure_finite("scale_rows", out);
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[0] != b.shape()[0])
    shape_fail("concat_cols", a, b);
  const std::size_t n = a.shape()[0], da = a.shape()[1], db = b.shape()[1];
  Tensor out({n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < da; ++j) out.at(i, j) = a.at(i, j);
    for (std::size_t j = 0; j < db; ++j) out.at(i, da + j) = b.at(i, j);
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi) {
  if (x.ndim() != 2 || lo >= hi || hi > x.shape()[1]) {
    throw ShapeError("slice_cols: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                     ") invalid for shape " + x.shape_str());
  }
  const std::size_t n = x.shape()[0], d = hi - lo;
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = x.at(i, lo + j);
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t lo, std::size_t hi) {
  if (x.ndim() != 2 || lo >= hi || hi > x.shape()[0]) {
    throw ShapeError("slice_rows: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                     ") invalid for shape " + x.shape_str());
  }
  const std::size_t d = x.shape()[1];
  Tensor out({hi - lo, d});
  for (std::size_t i = lo; i < hi; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i - lo, j) = x.at(i, j);
  return out;
}

double sum(const Tensor& a) {
  const auto v = a.data();
  return std::accumulate(v.begin(), v.end(), 0.0);
}

double mean(const Tensor& a) {
  if (a.empty()) throw ShapeError("mean: empty tensor");
  return sum(a) / static_cast<double>(a.size());
}

Tensor row_sum(const Tensor& x) {
  if (x.ndim() != 2) shape_fail("row_sum", x);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x.at(i, j);
    out[i] = s;
  }
  return out;
}

Tensor col_sum(const Tensor& x) {
  if (x.ndim() != 2) shape_fail("col_sum", x);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tensor out({d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.at(i, j);
  return out;
}

Tensor col_mean(const Tensor& x) {
  Tensor s = col_sum(x);
  return scale(s, 1.0 / static_cast<double>(x.shape()[0]));
}

Tensor col_std(const Tensor& x) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tensor m = col_mean(x);
  Tensor out({d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x.at(i, j) - m[j];
      out[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) out[j] = std::sqrt(out[j] / static_cast<double>(n));
  return out;
}

double l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

Tensor row_l2_norm(const Tensor& x) {
  if (x.ndim() != 2) shape_fail("row_l2_norm", x);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x.at(i, j) * x.at(i, j);
    out[i] = std::sqrt(s);
  }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("dot", a, b);
  double s = 0.0;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

Tensor randn(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : t.data()) v = dist(rng.engine());
  return t;
}

Tensor rand_uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng.engine());
  return t;
}

Tensor rademacher(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.rademacher();
  return t;
}

}  // namespace dualflow
