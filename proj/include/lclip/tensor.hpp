#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lclip/error.hpp"
#include "lclip/rng.hpp"

namespace lclip {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major array. Rank 0 is a scalar (one element). Tensors are
// immutable values once an operation has produced them; training code mutates
// only Param storage.
template <class T>
class TensorT {
public:
  TensorT() : shape_{}, data_(1, T(0)) {}

  explicit TensorT(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {}

  TensorT(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
      throw DimensionError("tensor: data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
  }

  static TensorT scalar(T v) {
    TensorT t;
    t.data_[0] = v;
    return t;
  }

  static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

  static TensorT full(Shape shape, T v) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static TensorT normal(Shape shape, Rng& rng, T stddev) {
    TensorT t(std::move(shape));
    for (auto& x : t.data_) x = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  static TensorT identity(std::size_t n) {
    TensorT t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = T(1);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  std::size_t rows() const { return shape_.size() > 0 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.size() > 1 ? shape_[1] : 1; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T item() const {
    if (numel() != 1)
      throw DimensionError("item: tensor " + shape_string(shape_) + " is not a scalar");
    return data_[0];
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& x : data_)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  // Accumulated in T so wider instantiations keep their full precision.
  T norm2() const {
    T s = 0;
    for (const T& x : data_) s += x * x;
    return std::sqrt(s);
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out{shape_, std::vector<U>(data_.size())};
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const TensorT& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// Standard matrix product, m×k by k×n. Cache-friendly i-k-j loop order.
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree " +
                         shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  TensorT<T> c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c.data() + i * n;
    const T* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

template <class T>
TensorT<T> transpose(const TensorT<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: rank-2 expected, got " + shape_string(a.shape()));
  TensorT<T> out(Shape{a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <class T>
T dot_product(const TensorT<T>& u, const TensorT<T>& v) {
  check_same_shape(u, v, "dot");
  T s = 0;
  for (std::size_t i = 0; i < u.numel(); ++i) s += u[i] * v[i];
  return s;
}

// cos(u, v) on equal-length vectors. Zero-norm input is an error, never a
// silent 0.
template <class T>
T cosine_sim(const TensorT<T>& u, const TensorT<T>& v) {
  if (u.numel() != v.numel() || u.numel() == 0)
    throw DimensionError("cosine_sim: length mismatch " + shape_string(u.shape()) +
                         " vs " + shape_string(v.shape()));
  const T nu = u.norm2(), nv = v.norm2();
  if (nu == T(0) || nv == T(0))
    throw DegenerateInputError("cosine_sim: zero-norm input");
  return dot_product(u, v) / (nu * nv);
}

template <class T>
TensorT<T> l2_normalized(const TensorT<T>& v) {
  const T n = v.norm2();
  if (n == T(0)) throw DegenerateInputError("l2_normalized: zero-norm input");
  TensorT<T> out = v;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] / n;
  return out;
}

using Tensor = TensorT<double>;

}  // namespace lclip
