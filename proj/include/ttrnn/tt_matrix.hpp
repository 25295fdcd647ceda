// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// Tensor-train matrices.
//
// A TT matrix of shape (d_1 ... d_n) x (m_1 ... m_n) is a chain of cores with
// shape [d_k, m_k, r_{k-1}, r_k] and boundary ranks r_0 = r_n = 1. Entry
// (i, j), with both indices unflattened row-major into (i_1..i_n) and
// (j_1..j_n), is the matrix product G_1[i_1, j_1] ... G_n[i_n, j_n] of the
// per-index rank slices.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ttrnn/binary_io.hpp"
#include "ttrnn/tensor.hpp"

namespace ttrnn {

class TTCore {
 public:
  // `values` must have shape [d, m, r_prev, r_next].
  explicit TTCore(Tensor values);

  std::size_t row_dim() const { return values_.dim(0); }
  std::size_t col_dim() const { return values_.dim(1); }
  std::size_t rank_in() const { return values_.dim(2); }
  std::size_t rank_out() const { return values_.dim(3); }
  const Tensor& values() const { return values_; }

 private:
  Tensor values_;
};

class TTMatrix {
 public:
  // Validates the rank chain and the unit boundary ranks.
  explicit TTMatrix(std::vector<TTCore> cores);
  static TTMatrix from_tensors(std::vector<Tensor> cores);

  std::size_t num_cores() const { return cores_.size(); }
  const std::vector<TTCore>& cores() const { return cores_; }
  const TTCore& core(std::size_t k) const { return cores_.at(k); }

  std::vector<std::size_t> row_dims() const;
  std::vector<std::size_t> col_dims() const;
  // r_0 .. r_n.
  std::vector<std::size_t> ranks() const;
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t max_rank() const;
  // Stored elements over all cores.
  std::size_t element_count() const;

  bool operator==(const TTMatrix& other) const;

 private:
  std::vector<TTCore> cores_;
};

// A TT matrix whose first core is the gate core [g, 1, 1, r0]. The encoded
// matrix is the row-wise stack of g gate blocks; gate i occupies rows
// [i*D, (i+1)*D) where D is the product of the remaining row factors.
class GateStackedTT {
 public:
  explicit GateStackedTT(TTMatrix matrix);

  const TTMatrix& matrix() const { return matrix_; }
  std::size_t gate_count() const { return matrix_.core(0).row_dim(); }
  std::size_t mixing_rank() const { return matrix_.core(0).rank_out(); }
  // D and M of a single gate block.
  std::size_t gate_rows() const { return matrix_.rows() / gate_count(); }
  std::size_t gate_cols() const { return matrix_.cols(); }
  // Gate core squeezed to [g, r0].
  Tensor mixing_matrix() const;

 private:
  TTMatrix matrix_;
};

// Forbids dense reconstruction of TT matrices on the current thread while
// alive. Training installs one so a gD x M matrix can never be materialized
// from TT parameters.
class DensifyGuard {
 public:
  DensifyGuard();
  DensifyGuard(const DensifyGuard&) = delete;
  DensifyGuard& operator=(const DensifyGuard&) = delete;
  ~DensifyGuard();
};

bool densify_forbidden();

// n factors with product N, ascending, minimizing the largest factor; ties go
// to the lexicographically smallest list.
std::vector<std::size_t> balanced_factorization(std::size_t n_value,
                                                std::size_t parts);

// Dense [rows, cols] matrix. Throws StateError under a DensifyGuard.
Tensor tt_to_dense(const TTMatrix& ttm);

// y[b, :] = T x[b, :] for x of shape [batch, M], without forming T.
//
// The cores are consumed left to right. Before core k the intermediate holds
// [P, r_{k-1}, m_k, S] with P = batch * d_1..d_{k-1} and S = m_{k+1}..m_n;
// contracting (r_{k-1}, m_k) against the core yields [P, S, d_k, r_k], which is
// reordered to [P * d_k, r_k, S].
template <class Ops>
typename Ops::Value tt_matvec(Ops& ops,
                              std::span<const typename Ops::Value> cores,
                              typename Ops::Value x) {
  if (cores.empty()) throw ShapeError("tt_matvec: no cores");
  const Shape& x_shape = ops.shape(x);
  if (x_shape.size() != 2) throw ShapeError("tt_matvec expects x as [batch, M]");
  const std::size_t batch = x_shape[0];
  std::size_t cols = 1;
  std::size_t rows = 1;
  for (const auto& core : cores) {
    const Shape& s = ops.shape(core);
    if (s.size() != 4) throw ShapeError("tt_matvec: core must have rank 4");
    rows *= s[0];
    cols *= s[1];
  }
  if (x_shape[1] != cols) {
    throw ShapeError("tt_matvec: input has " + std::to_string(x_shape[1]) +
                     " columns, matrix has " + std::to_string(cols));
  }
  std::size_t prefix = batch;
  std::size_t suffix = cols;
  std::size_t rank = 1;
  typename Ops::Value z = x;
  for (const auto& core : cores) {
    const Shape& s = ops.shape(core);
    if (s[2] != rank) throw ShapeError("tt_matvec: rank chain mismatch");
    suffix /= s[1];
    z = ops.reshape(z, {prefix, rank, s[1], suffix});
    auto y = ops.contract(z, core, {1, 2}, {2, 1});
    if (suffix == 1) {
      z = ops.reshape(y, {prefix * s[0], s[3], 1});
    } else {
      z = ops.permute(y, {0, 2, 3, 1});
    }
    prefix *= s[0];
    rank = s[3];
  }
  if (rank != 1) throw ShapeError("tt_matvec: trailing rank must be 1");
  return ops.reshape(z, {batch, rows});
}

Tensor tt_matvec(const TTMatrix& ttm, const Tensor& x);

// Multiply-adds issued by tt_matvec for the given batch.
std::uint64_t flop_count_matvec(const TTMatrix& ttm, std::size_t batch);

// Sequential-SVD factorization. `max_ranks` holds the n-1 internal rank caps
// (0 means uncapped). Each step keeps min(cap, #{s_i > svd_tol * s_1}) values,
// at least one.
TTMatrix tt_svd(const Tensor& w, std::span<const std::size_t> row_dims,
                std::span<const std::size_t> col_dims,
                std::span<const std::size_t> max_ranks, double svd_tol);

// I.i.d. Gaussian cores scaled so the dense entries have standard deviation
// close to target_std. `ranks` holds r_0 .. r_n.
TTMatrix init_tt(std::span<const std::size_t> row_dims,
                 std::span<const std::size_t> col_dims,
                 std::span<const std::size_t> ranks, std::uint64_t seed,
                 double target_std);

// g * D * (M + D): input and hidden matrices of a dense gated cell.
std::uint64_t param_count_dense(std::uint64_t gates, std::uint64_t hidden,
                                std::uint64_t input);

// g * sum_k r_{k-1} r_k d_k (m_k + d_k), one TT chain per gate and matrix.
// Input and hidden chains share the row factors d and the ranks.
std::uint64_t param_count_separate(std::uint64_t gates,
                                   std::span<const std::size_t> row_dims,
                                   std::span<const std::size_t> col_dims,
                                   std::span<const std::size_t> ranks);

// g * r0 + sum_k r_{k-1} r_k d_k (m_k + d_k) with `ranks` = r_0 .. r_n and
// r_0 the gate rank. Counts a single gate core.
std::uint64_t param_count_fused(std::uint64_t gates, std::uint64_t rank0,
                                std::span<const std::size_t> row_dims,
                                std::span<const std::size_t> col_dims,
                                std::span<const std::size_t> ranks);

// As param_count_fused, with one gate core for each of the input and hidden
// stacks: 2 * g * r0 + sum.
std::uint64_t param_count_fused_stored(std::uint64_t gates, std::uint64_t rank0,
                                       std::span<const std::size_t> row_dims,
                                       std::span<const std::size_t> col_dims,
                                       std::span<const std::size_t> ranks);

// Self-describing record: u32 version, u32 n, row dims, col dims, ranks (all
// u64), then each core's values as little-endian f64.
inline constexpr std::uint32_t kTTRecordVersion = 1;
void write_tt_record(BinaryWriter& out, const TTMatrix& ttm);
TTMatrix read_tt_record(BinaryReader& in);

}  // namespace ttrnn
