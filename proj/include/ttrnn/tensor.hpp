// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// Dense row-major tensors and the primitive operations the rest of the
// library is built from: reshape, axis permutation, pairwise contraction and
// pointwise maps. All operations are pure; inputs are never modified.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ttrnn/errors.hpp"

namespace ttrnn {

using Shape = std::vector<std::size_t>;
using Axes = std::vector<std::size_t>;

enum class DType { kFloat64, kFloat32 };

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// Row-major GEMM, C[m,n] = op(A) * op(B). op transposes when the flag is set,
// in which case the operand is stored as [k,m] (resp. [n,k]).
void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool trans_a, bool trans_b);
void gemm(const float* a, const float* b, float* c, std::size_t m,
          std::size_t k, std::size_t n, bool trans_a, bool trans_b);

void add_macs(std::uint64_t count);

}  // namespace detail

// Counts multiply-adds issued by contractions on the current thread while in
// scope. Nested counters each see the full count.
class MacCounter {
 public:
  MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  ~MacCounter();

  std::uint64_t count() const;

 private:
  std::uint64_t start_;
};

template <class T>
class BasicTensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  using value_type = T;

  // Rank-0 scalar holding zero.
  BasicTensor() : data_(1, T{0}) {}

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), T{0});
  }

  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static BasicTensor full(Shape shape, T value) {
    BasicTensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static BasicTensor scalar(T value) { return BasicTensor(Shape{}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
      throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                       shape_str(shape_));
    }
    return shape_[axis];
  }

  static constexpr DType dtype() {
    return std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
  }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw ShapeError("index rank mismatch for " + shape_str(shape_));
    }
    std::size_t flat = 0;
    for (std::size_t a = 0; a < index.size(); ++a) {
      if (index[a] >= shape_[a]) {
        throw ShapeError("index out of range for " + shape_str(shape_));
      }
      flat = flat * shape_[a] + index[a];
    }
    return flat;
  }

  T& at(std::initializer_list<std::size_t> index) {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }
  const T& at(std::initializer_list<std::size_t> index) const {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }
  T& at(std::span<const std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::span<const std::size_t> index) const {
    return data_[offset(index)];
  }

  BasicTensor reshaped(Shape shape) const& {
    BasicTensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
  }

  BasicTensor reshaped(Shape shape) && {
    check_shape(shape);
    if (shape_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                       shape_str(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  static void check_shape(const Shape& shape) {
    for (std::size_t d : shape) {
      if (d == 0) {
        throw ShapeError("axis lengths must be positive: " + shape_str(shape));
      }
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

template <class To, class From>
BasicTensor<To> cast(const BasicTensor<From>& t) {
  std::vector<To> out(t.data().begin(), t.data().end());
  return BasicTensor<To>(t.shape(), std::move(out));
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& t, Shape new_shape) {
  return t.reshaped(std::move(new_shape));
}

// out.shape[a] = t.shape[perm[a]].
template <class T>
BasicTensor<T> permute(const BasicTensor<T>& t, const Axes& perm) {
  const std::size_t rank = t.rank();
  if (perm.size() != rank) {
    throw ShapeError("permutation rank mismatch for " + shape_str(t.shape()));
  }
  std::vector<bool> seen(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || seen[p]) {
      throw ShapeError("invalid axis permutation for " + shape_str(t.shape()));
    }
    seen[p] = true;
  }
  bool identity = true;
  for (std::size_t a = 0; a < rank; ++a) identity = identity && perm[a] == a;
  if (identity) return t;

  Shape out_shape(rank);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t a = rank; a-- > 1;) {
    in_strides[a - 1] = in_strides[a] * t.shape()[a];
  }
  std::vector<std::size_t> stride(rank);
  for (std::size_t a = 0; a < rank; ++a) {
    out_shape[a] = t.shape()[perm[a]];
    stride[a] = in_strides[perm[a]];
  }
  BasicTensor<T> out(out_shape);
  auto src = t.data();
  auto dst = out.data();

  // Innermost output axis is walked in a tight loop.
  const std::size_t inner = out_shape[rank - 1];
  const std::size_t inner_stride = stride[rank - 1];
  std::vector<std::size_t> index(rank, 0);
  std::size_t src_base = 0;
  for (std::size_t flat = 0; flat < dst.size(); flat += inner) {
    const T* s = src.data() + src_base;
    T* d = dst.data() + flat;
    for (std::size_t j = 0; j < inner; ++j) d[j] = s[j * inner_stride];
    for (std::size_t a = rank - 1; a-- > 0;) {
      if (++index[a] < out_shape[a]) {
        src_base += stride[a];
        break;
      }
      src_base -= stride[a] * (out_shape[a] - 1);
      index[a] = 0;
    }
  }
  return out;
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  BasicTensor<T> c(Shape{a.dim(0), b.dim(1)});
  detail::gemm(a.data().data(), b.data().data(), c.data().data(), a.dim(0),
               a.dim(1), b.dim(1), false, false);
  detail::add_macs(static_cast<std::uint64_t>(a.dim(0)) * a.dim(1) * b.dim(1));
  return c;
}

// Sums over the paired axes. The result carries the free axes of `a` followed
// by the free axes of `b`, each in their original order. Implemented as
// permute-to-matrix followed by one GEMM.
template <class T>
BasicTensor<T> contract(const BasicTensor<T>& a, const BasicTensor<T>& b,
                        const Axes& axes_a, const Axes& axes_b) {
  if (axes_a.size() != axes_b.size()) {
    throw ShapeError("contract: axis lists differ in length");
  }
  auto free_axes = [](const BasicTensor<T>& t, const Axes& paired) {
    std::vector<bool> used(t.rank(), false);
    for (std::size_t ax : paired) {
      if (ax >= t.rank()) {
        throw ShapeError("contract: axis " + std::to_string(ax) +
                         " out of range for " + shape_str(t.shape()));
      }
      if (used[ax]) throw ShapeError("contract: repeated axis");
      used[ax] = true;
    }
    Axes out;
    for (std::size_t ax = 0; ax < t.rank(); ++ax) {
      if (!used[ax]) out.push_back(ax);
    }
    return out;
  };
  const Axes free_a = free_axes(a, axes_a);
  const Axes free_b = free_axes(b, axes_b);

  std::size_t k = 1;
  for (std::size_t p = 0; p < axes_a.size(); ++p) {
    if (a.shape()[axes_a[p]] != b.shape()[axes_b[p]]) {
      throw ShapeError("contract: paired axis lengths differ (" +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                       ")");
    }
    k *= a.shape()[axes_a[p]];
  }
  std::size_t m = 1;
  std::size_t n = 1;
  Shape out_shape;
  for (std::size_t ax : free_a) {
    m *= a.shape()[ax];
    out_shape.push_back(a.shape()[ax]);
  }
  for (std::size_t ax : free_b) {
    n *= b.shape()[ax];
    out_shape.push_back(b.shape()[ax]);
  }

  auto concat = [](const Axes& x, const Axes& y) {
    Axes out = x;
    out.insert(out.end(), y.begin(), y.end());
    return out;
  };
  auto is_iota = [](const Axes& axes) {
    for (std::size_t i = 0; i < axes.size(); ++i) {
      if (axes[i] != i) return false;
    }
    return true;
  };
  // A is consumed as [m,k] and B as [k,n]. When the paired axes already sit on
  // the other side, a transposed GEMM operand replaces the physical permute.
  bool trans_a = false;
  BasicTensor<T> a_mat;
  const BasicTensor<T>* a_ptr = &a;
  if (!is_iota(concat(free_a, axes_a))) {
    if (is_iota(concat(axes_a, free_a))) {
      trans_a = true;
    } else {
      a_mat = permute(a, concat(free_a, axes_a));
      a_ptr = &a_mat;
    }
  }
  bool trans_b = false;
  BasicTensor<T> b_mat;
  const BasicTensor<T>* b_ptr = &b;
  if (!is_iota(concat(axes_b, free_b))) {
    if (is_iota(concat(free_b, axes_b))) {
      trans_b = true;
    } else {
      b_mat = permute(b, concat(axes_b, free_b));
      b_ptr = &b_mat;
    }
  }

  BasicTensor<T> c(out_shape);
  detail::gemm(a_ptr->data().data(), b_ptr->data().data(), c.data().data(), m,
               k, n, trans_a, trans_b);
  detail::add_macs(static_cast<std::uint64_t>(m) * k * n);
  return c;
}

template <class T, class Fn>
BasicTensor<T> map(const BasicTensor<T>& t, Fn&& fn) {
  BasicTensor<T> out = t;
  for (T& v : out.data()) v = fn(v);
  return out;
}

template <class T, class Fn>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, Fn&& fn,
                   const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  BasicTensor<T> out = a;
  auto o = out.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fn(o[i], y[i]);
  return out;
}

template <class T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T>
BasicTensor<T> tanh(const BasicTensor<T>& t) {
  return map(t, [](T v) { return std::tanh(v); });
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& t) {
  return map(t, [](T v) { return sigmoid(v); });
}

template <class T>
BasicTensor<T> add_const(const BasicTensor<T>& t, T c) {
  return map(t, [c](T v) { return v + c; });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& t, T c) {
  return map(t, [c](T v) { return v * c; });
}

template <class T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return zip(a, b, [](T x, T y) { return x * y; }, "hadamard");
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return zip(a, b, [](T x, T y) { return x + y; }, "add");
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return zip(a, b, [](T x, T y) { return x - y; }, "sub");
}

enum class Elementwise { kTanh, kSigmoid, kAddConst, kHadamard };

// Dispatching form of the pointwise maps. `arg` is the constant for kAddConst
// and the second operand for kHadamard; ignored otherwise.
template <class T>
BasicTensor<T> map_elementwise(const BasicTensor<T>& t, Elementwise fn,
                               T constant = T{0},
                               const BasicTensor<T>* other = nullptr) {
  switch (fn) {
    case Elementwise::kTanh:
      return tanh(t);
    case Elementwise::kSigmoid:
      return sigmoid(t);
    case Elementwise::kAddConst:
      return add_const(t, constant);
    case Elementwise::kHadamard:
      if (other == nullptr) throw ShapeError("hadamard needs a second operand");
      return hadamard(t, *other);
  }
  return t;
}

template <class T>
T sum(const BasicTensor<T>& t) {
  T s{0};
  for (T v : t.data()) s += v;
  return s;
}

template <class T>
T frobenius_norm(const BasicTensor<T>& t) {
  T s{0};
  for (T v : t.data()) s += v * v;
  return std::sqrt(s);
}

// ||a - b|| / ||b||, falling back to the absolute error when b is zero.
template <class T>
T relative_error(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const T diff = frobenius_norm(sub(a, b));
  const T ref = frobenius_norm(b);
  return ref > T{0} ? diff / ref : diff;
}

template <class T>
bool all_finite(const BasicTensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](T v) { return std::isfinite(v); });
}

}  // namespace ttrnn
