// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include "ttrnn/ops.hpp"

#include <cmath>
#include <limits>

namespace ttrnn {
namespace kernels {

Tensor slice_last(const Tensor& x, std::size_t offset, std::size_t length) {
  if (x.rank() == 0) throw ShapeError("slice_last on a scalar");
  const std::size_t cols = x.shape().back();
  if (length == 0 || offset + length > cols) {
    throw ShapeError("slice [" + std::to_string(offset) + ", " +
                     std::to_string(offset + length) + ") out of range for " +
                     shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = length;
  Tensor out(out_shape);
  const std::size_t rows = x.size() / cols;
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(src.begin() + r * cols + offset, length,
                dst.begin() + r * length);
  }
  return out;
}

Tensor concat_last(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape out_shape = parts.front()->shape();
  if (out_shape.empty()) throw ShapeError("concat of scalars");
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    Shape lead = p->shape();
    if (lead.size() != out_shape.size()) throw ShapeError("concat rank mismatch");
    total += lead.back();
    lead.back() = out_shape.back();
    if (lead != out_shape) throw ShapeError("concat leading axes mismatch");
  }
  out_shape.back() = total;
  Tensor out(out_shape);
  const std::size_t rows = out.size() / total;
  std::size_t col = 0;
  for (const Tensor* p : parts) {
    const std::size_t w = p->shape().back();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p->data().begin() + r * w, w,
                  out.data().begin() + r * total + col);
    }
    col += w;
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.size()) {
    throw ShapeError("add_bias: " + shape_str(x.shape()) + " + " +
                     shape_str(bias.shape()));
  }
  Tensor out = x;
  const std::size_t n = bias.size();
  auto o = out.data();
  auto b = bias.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += b[i % n];
  return out;
}

Tensor row_normalize(const Tensor& x, std::vector<double>* norms) {
  if (x.rank() != 2) throw ShapeError("row_normalize expects a matrix");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  Tensor out = x;
  auto o = out.data();
  if (norms != nullptr) norms->assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += o[r * cols + c] * o[r * cols + c];
    const double norm = std::sqrt(s);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw NumericError("row_normalize: row " + std::to_string(r) +
                         " has zero or non-finite norm");
    }
    for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] /= norm;
    if (norms != nullptr) (*norms)[r] = norm;
  }
  return out;
}

Tensor scalar_mul(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("scalar_mul expects a one-element scale");
  return scale(x, s[0]);
}

Tensor scalar_add(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("scalar_add expects a one-element offset");
  return add_const(x, s[0]);
}

Tensor softmax_xent(const Tensor& logits, std::span<const int> labels,
                    Reduction reduction, Tensor* probs) {
  if (logits.rank() != 2) throw ShapeError("softmax_xent expects [batch, K]");
  const std::size_t rows = logits.dim(0);
  const std::size_t k = logits.dim(1);
  if (labels.size() != rows) {
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(rows) + " rows");
  }
  if (probs != nullptr) *probs = Tensor(logits.shape());
  auto z = logits.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ShapeError("label " + std::to_string(label) + " out of range [0, " +
                       std::to_string(k) + ")");
    }
    const double* row = z.data() + r * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, row[c]);
    double se = 0.0;
    for (std::size_t c = 0; c < k; ++c) se += std::exp(row[c] - mx);
    const double lse = mx + std::log(se);
    total += lse - row[label];
    if (probs != nullptr) {
      for (std::size_t c = 0; c < k; ++c) {
        (*probs)[r * k + c] = std::exp(row[c] - lse);
      }
    }
  }
  if (reduction == Reduction::kMean) total /= static_cast<double>(rows);
  return Tensor::scalar(total);
}

Tensor sum_all(const Tensor& x) { return Tensor::scalar(sum(x)); }

Axes inverse_permutation(const Axes& perm) {
  Axes inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

}  // namespace kernels

EagerOps::Value EagerOps::param(const std::string& name) const {
  if (params_ == nullptr) throw StateError("EagerOps has no parameter store");
  auto it = params_->find(name);
  if (it == params_->end()) throw StateError("unknown parameter '" + name + "'");
  return it->second;
}

EagerOps::Value EagerOps::concat_last(std::span<const Value> parts) const {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(parts.size());
  for (const Tensor& p : parts) ptrs.push_back(&p);
  return kernels::concat_last(ptrs);
}

}  // namespace ttrnn
