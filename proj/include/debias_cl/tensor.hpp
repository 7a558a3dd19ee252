#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "debias_cl/error.hpp"

namespace debias_cl {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

// Dense row-major array of doubles. A rank-0 tensor (empty shape) is a scalar
// holding one value; that is also what a default-constructed Tensor is.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor(Shape{rows, cols}, fill); }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
  }

  static Tensor row(std::span<const double> values) {
    return Tensor(Shape{1, values.size()}, std::vector<double>(values.begin(), values.end()));
  }

  static Tensor column(std::span<const double> values) {
    return Tensor(Shape{values.size(), 1}, std::vector<double>(values.begin(), values.end()));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool is_scalar() const { return shape_.empty(); }

  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> row_span(std::size_t r) { return std::span<double>(data_).subspan(r * shape_[1], shape_[1]); }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
  }

  double item() const {
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  // Bit-exact comparison of shape and contents.
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

inline void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_string(a.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

inline void require_finite(const Tensor& a, const char* op) {
  if (!a.all_finite()) throw NumericError(std::string(op) + ": non-finite value");
}

// Elementwise binary op with scalar broadcast on either side. Returns the
// output shape; throws if neither exact match nor scalar broadcast applies.
inline const Shape& broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (a.is_scalar()) return b.shape();
  if (b.is_scalar()) return a.shape();
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
}

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f) {
  Tensor out(broadcast_shape(a, b, op));
  const bool sa = a.numel() == 1 && a.is_scalar();
  const bool sb = b.numel() == 1 && b.is_scalar();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(sa ? a[0] : a[i], sb ? b[0] : b[i]);
  return out;
}

template <class F>
Tensor unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace detail

inline constexpr double kNormalizeEpsilon = 1e-12;

// Value-only operations. The taped overloads in autodiff.hpp share these names
// so generic code can be written once for both.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      const double* brow = &b(p, 0);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(a, b, "add", [](double x, double y) { return x + y; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(a, b, "sub", [](double x, double y) { return x - y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(a, b, "mul", [](double x, double y) { return x * y; });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return s * x; });
}
inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return x + s; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); });
}
inline Tensor relu(const Tensor& a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
}
inline Tensor exp(const Tensor& a) {
  Tensor out = detail::unary(a, [](double x) { return std::exp(x); });
  detail::require_finite(out, "exp");
  return out;
}
inline Tensor log(const Tensor& a) {
  for (double v : a.data())
    if (!(v > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(v));
  return detail::unary(a, [](double x) { return std::log(x); });
}
inline Tensor square(const Tensor& a) {
  return detail::unary(a, [](double x) { return x * x; });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::scalar(s);
}
inline Tensor mean(const Tensor& a) {
  return Tensor::scalar(sum(a).item() / static_cast<double>(a.numel()));
}

// [m x n] -> [m x 1]
inline Tensor row_sum(const Tensor& a) {
  detail::require_matrix(a, "row_sum");
  Tensor out = Tensor::matrix(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row_span(i)) s += v;
    out[i] = s;
  }
  return out;
}

// [m x m] -> [m x 1]
inline Tensor diagonal(const Tensor& a) {
  detail::require_matrix(a, "diagonal");
  if (a.rows() != a.cols()) throw DimensionError("diagonal: non-square " + shape_string(a.shape()));
  Tensor out = Tensor::matrix(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = a(i, i);
  return out;
}

// [m x n] + [1 x n], adding the row vector to every row. This is the one
// explicit non-scalar broadcast (layer biases).
inline Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
  detail::require_matrix(a, "add_row_vector");
  if (bias.shape() != Shape{1, a.cols()}) {
    throw DimensionError("add_row_vector: bias shape " + shape_string(bias.shape()) + " incompatible with " +
                         shape_string(a.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += bias[j];
  return out;
}

inline Tensor row_norms(const Tensor& a) {
  detail::require_matrix(a, "row_norms");
  Tensor out = Tensor::matrix(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row_span(i)) s += v * v;
    out[i] = std::sqrt(s);
  }
  return out;
}

inline Tensor rowwise_l2_normalize(const Tensor& a, double epsilon = kNormalizeEpsilon) {
  const Tensor norms = row_norms(a);
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (!(norms[i] > epsilon)) throw DegenerateVectorError(i, norms[i]);
    for (double& v : out.row_span(i)) v /= norms[i];
  }
  return out;
}

inline Tensor log_softmax_rows(const Tensor& a) {
  detail::require_matrix(a, "log_softmax_rows");
  detail::require_finite(a, "log_softmax_rows");
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = out.row_span(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    const double log_s = std::log(s);
    for (double& v : row) v = (v - mx) - log_s;
  }
  return out;
}

// Selects rows by index into a new [k x n] matrix.
inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  detail::require_matrix(a, "gather_rows");
  Tensor out = Tensor::matrix(indices.size(), a.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = a.row_span(indices[r]);
    std::copy(src.begin(), src.end(), out.row_span(r).begin());
  }
  return out;
}

}  // namespace debias_cl
