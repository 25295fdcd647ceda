// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// The closed operation set shared by eager evaluation and the gradient tape.
// Model code (cells, TT matvec, losses) is written once against the "ops"
// interface below and instantiated with either EagerOps (plain values) or
// TapeOps (recorded for reverse mode). Both call the same forward kernels, so
// taped and untaped results agree bit for bit.

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ttrnn/tensor.hpp"

namespace ttrnn {

// Named trainable tensors; ordered so iteration is deterministic.
using ParamStore = std::map<std::string, Tensor>;
// Parameter name -> accumulated adjoint of the same shape.
using GradMap = std::map<std::string, Tensor>;

enum class Reduction { kSum, kMean };

namespace kernels {

// Columns [offset, offset + length) of the last axis.
Tensor slice_last(const Tensor& x, std::size_t offset, std::size_t length);
Tensor concat_last(std::span<const Tensor* const> parts);
// x[..., n] + b[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Rows of x[rows, n] scaled to unit L2 norm; zero rows are an error.
Tensor row_normalize(const Tensor& x, std::vector<double>* norms = nullptr);
Tensor scalar_mul(const Tensor& x, const Tensor& s);
Tensor scalar_add(const Tensor& x, const Tensor& s);
// -log softmax(logits)[label], reduced over rows. Returns a rank-0 tensor;
// optionally the row softmax probabilities.
Tensor softmax_xent(const Tensor& logits, std::span<const int> labels,
                    Reduction reduction, Tensor* probs = nullptr);
Tensor sum_all(const Tensor& x);

Axes inverse_permutation(const Axes& perm);

}  // namespace kernels

class EagerOps {
 public:
  using Value = Tensor;

  EagerOps() = default;
  explicit EagerOps(const ParamStore* params) : params_(params) {}

  const Tensor& value(const Value& v) const { return v; }
  const Shape& shape(const Value& v) const { return v.shape(); }

  Value param(const std::string& name) const;
  Value constant(Tensor t) const { return t; }

  Value contract(const Value& a, const Value& b, const Axes& axes_a,
                 const Axes& axes_b) const {
    return ttrnn::contract(a, b, axes_a, axes_b);
  }
  Value reshape(const Value& a, Shape shape) const {
    return a.reshaped(std::move(shape));
  }
  Value permute(const Value& a, const Axes& perm) const {
    return ttrnn::permute(a, perm);
  }
  Value slice_last(const Value& a, std::size_t offset, std::size_t length) const {
    return kernels::slice_last(a, offset, length);
  }
  Value concat_last(std::span<const Value> parts) const;
  Value add(const Value& a, const Value& b) const { return ttrnn::add(a, b); }
  Value sub(const Value& a, const Value& b) const { return ttrnn::sub(a, b); }
  Value hadamard(const Value& a, const Value& b) const {
    return ttrnn::hadamard(a, b);
  }
  Value add_bias(const Value& x, const Value& b) const {
    return kernels::add_bias(x, b);
  }
  Value scale(const Value& a, double c) const { return ttrnn::scale(a, c); }
  Value add_const(const Value& a, double c) const {
    return ttrnn::add_const(a, c);
  }
  Value tanh(const Value& a) const { return ttrnn::tanh(a); }
  Value sigmoid(const Value& a) const { return ttrnn::sigmoid(a); }
  Value row_normalize(const Value& a) const { return kernels::row_normalize(a); }
  Value scalar_mul(const Value& a, const Value& s) const {
    return kernels::scalar_mul(a, s);
  }
  Value scalar_add(const Value& a, const Value& s) const {
    return kernels::scalar_add(a, s);
  }
  Value softmax_xent(const Value& logits, std::span<const int> labels,
                     Reduction reduction) const {
    return kernels::softmax_xent(logits, labels, reduction);
  }
  Value sum(const Value& a) const { return kernels::sum_all(a); }

 private:
  const ParamStore* params_ = nullptr;
};

}  // namespace ttrnn
