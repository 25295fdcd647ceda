// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include "ttrnn/tt_matrix.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <functional>

#include "ttrnn/ops.hpp"
#include "ttrnn/random.hpp"

namespace ttrnn {
namespace {

thread_local int g_densify_guards = 0;

std::size_t product(std::span<const std::size_t> v) {
  std::size_t p = 1;
  for (std::size_t x : v) p *= x;
  return p;
}

void check_dims(std::span<const std::size_t> row_dims,
                std::span<const std::size_t> col_dims) {
  if (row_dims.empty() || row_dims.size() != col_dims.size()) {
    throw ShapeError("row and column factorizations must be non-empty and of equal length");
  }
  for (std::size_t i = 0; i < row_dims.size(); ++i) {
    if (row_dims[i] == 0 || col_dims[i] == 0) {
      throw ShapeError("factor dimensions must be positive");
    }
  }
}

void check_ranks(std::span<const std::size_t> ranks, std::size_t cores) {
  if (ranks.size() != cores + 1) {
    throw ShapeError("expected " + std::to_string(cores + 1) + " ranks, got " +
                     std::to_string(ranks.size()));
  }
  for (std::size_t r : ranks) {
    if (r == 0) throw ShapeError("ranks must be positive");
  }
}

std::uint64_t chain_cost(std::span<const std::size_t> row_dims,
                         std::span<const std::size_t> col_dims,
                         std::span<const std::size_t> ranks) {
  check_dims(row_dims, col_dims);
  check_ranks(ranks, row_dims.size());
  std::uint64_t total = 0;
  for (std::size_t k = 0; k < row_dims.size(); ++k) {
    total += static_cast<std::uint64_t>(ranks[k]) * ranks[k + 1] * row_dims[k] *
             (col_dims[k] + row_dims[k]);
  }
  return total;
}

}  // namespace

TTCore::TTCore(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 4) {
    throw ShapeError("TT core must be [d, m, r_prev, r_next], got " +
                     shape_str(values_.shape()));
  }
}

TTMatrix::TTMatrix(std::vector<TTCore> cores) : cores_(std::move(cores)) {
  if (cores_.empty()) throw ShapeError("TT matrix needs at least one core");
  if (cores_.front().rank_in() != 1 || cores_.back().rank_out() != 1) {
    throw ShapeError("TT boundary ranks must be 1");
  }
  for (std::size_t k = 0; k + 1 < cores_.size(); ++k) {
    if (cores_[k].rank_out() != cores_[k + 1].rank_in()) {
      throw ShapeError("TT rank chain mismatch between cores " +
                       std::to_string(k) + " and " + std::to_string(k + 1));
    }
  }
}

TTMatrix TTMatrix::from_tensors(std::vector<Tensor> cores) {
  std::vector<TTCore> out;
  out.reserve(cores.size());
  for (Tensor& c : cores) out.emplace_back(std::move(c));
  return TTMatrix(std::move(out));
}

std::vector<std::size_t> TTMatrix::row_dims() const {
  std::vector<std::size_t> out;
  for (const TTCore& c : cores_) out.push_back(c.row_dim());
  return out;
}

std::vector<std::size_t> TTMatrix::col_dims() const {
  std::vector<std::size_t> out;
  for (const TTCore& c : cores_) out.push_back(c.col_dim());
  return out;
}

std::vector<std::size_t> TTMatrix::ranks() const {
  std::vector<std::size_t> out{1};
  for (const TTCore& c : cores_) out.push_back(c.rank_out());
  return out;
}

std::size_t TTMatrix::rows() const { return product(row_dims()); }
std::size_t TTMatrix::cols() const { return product(col_dims()); }

std::size_t TTMatrix::max_rank() const {
  std::size_t r = 1;
  for (std::size_t x : ranks()) r = std::max(r, x);
  return r;
}

std::size_t TTMatrix::element_count() const {
  std::size_t n = 0;
  for (const TTCore& c : cores_) n += c.values().size();
  return n;
}

bool TTMatrix::operator==(const TTMatrix& other) const {
  if (cores_.size() != other.cores_.size()) return false;
  for (std::size_t k = 0; k < cores_.size(); ++k) {
    if (!(cores_[k].values() == other.cores_[k].values())) return false;
  }
  return true;
}

GateStackedTT::GateStackedTT(TTMatrix matrix) : matrix_(std::move(matrix)) {
  const TTCore& gate = matrix_.core(0);
  if (matrix_.num_cores() < 2 || gate.col_dim() != 1) {
    throw ShapeError("gate-stacked TT needs a leading [g, 1, 1, r0] core and at least one inner core");
  }
}

Tensor GateStackedTT::mixing_matrix() const {
  return matrix_.core(0).values().reshaped({gate_count(), mixing_rank()});
}

DensifyGuard::DensifyGuard() { ++g_densify_guards; }
DensifyGuard::~DensifyGuard() { --g_densify_guards; }
bool densify_forbidden() { return g_densify_guards > 0; }

std::vector<std::size_t> balanced_factorization(std::size_t n_value,
                                                std::size_t parts) {
  if (n_value == 0 || parts == 0) {
    throw ShapeError("balanced_factorization needs N >= 1 and n >= 1");
  }
  std::vector<std::size_t> best;
  std::vector<std::size_t> current;
  // Ascending lists are enumerated in lexicographic order, so the first list
  // reaching a new minimum of the largest factor wins ties.
  std::function<void(std::size_t, std::size_t)> search =
      [&](std::size_t remaining, std::size_t min_factor) {
        if (current.size() + 1 == parts) {
          if (remaining < min_factor) return;
          current.push_back(remaining);
          if (best.empty() || current.back() < best.back()) best = current;
          current.pop_back();
          return;
        }
        const std::size_t left = parts - current.size();
        for (std::size_t f = min_factor; f <= remaining; ++f) {
          std::size_t power = 1;
          for (std::size_t i = 0; i < left && power <= remaining; ++i) power *= f;
          if (power > remaining) break;
          if (remaining % f != 0) continue;
          if (!best.empty() && f > best.back()) break;
          current.push_back(f);
          search(remaining / f, f);
          current.pop_back();
        }
      };
  search(n_value, 1);
  return best;
}

Tensor tt_to_dense(const TTMatrix& ttm) {
  if (densify_forbidden()) {
    throw StateError("dense reconstruction of a TT matrix is disabled here");
  }
  const std::size_t n = ttm.num_cores();
  // acc holds [(d_1 m_1 ... d_k m_k), r_k].
  Tensor acc = ttm.core(0).values().reshaped(
      {ttm.core(0).row_dim() * ttm.core(0).col_dim(), ttm.core(0).rank_out()});
  for (std::size_t k = 1; k < n; ++k) {
    const TTCore& c = ttm.core(k);
    Tensor next = contract(acc, c.values(), {1}, {2});  // [A, d, m, r]
    acc = std::move(next).reshaped({acc.dim(0) * c.row_dim() * c.col_dim(),
                                    c.rank_out()});
  }
  Shape interleaved;
  for (std::size_t k = 0; k < n; ++k) {
    interleaved.push_back(ttm.core(k).row_dim());
    interleaved.push_back(ttm.core(k).col_dim());
  }
  Axes perm;
  for (std::size_t k = 0; k < n; ++k) perm.push_back(2 * k);
  for (std::size_t k = 0; k < n; ++k) perm.push_back(2 * k + 1);
  return permute(std::move(acc).reshaped(interleaved), perm)
      .reshaped({ttm.rows(), ttm.cols()});
}

Tensor tt_matvec(const TTMatrix& ttm, const Tensor& x) {
  EagerOps ops;
  std::vector<Tensor> cores;
  cores.reserve(ttm.num_cores());
  for (const TTCore& c : ttm.cores()) cores.push_back(c.values());
  return tt_matvec<EagerOps>(ops, cores, x);
}

std::uint64_t flop_count_matvec(const TTMatrix& ttm, std::size_t batch) {
  std::uint64_t prefix = batch;
  std::uint64_t suffix = ttm.cols();
  std::uint64_t total = 0;
  for (const TTCore& c : ttm.cores()) {
    suffix /= c.col_dim();
    total += prefix * suffix * c.rank_in() * c.col_dim() * c.row_dim() *
             c.rank_out();
    prefix *= c.row_dim();
  }
  return total;
}

TTMatrix tt_svd(const Tensor& w, std::span<const std::size_t> row_dims,
                std::span<const std::size_t> col_dims,
                std::span<const std::size_t> max_ranks, double svd_tol) {
  check_dims(row_dims, col_dims);
  const std::size_t n = row_dims.size();
  if (w.rank() != 2 || w.dim(0) != product(row_dims) ||
      w.dim(1) != product(col_dims)) {
    throw ShapeError("tt_svd: matrix " + shape_str(w.shape()) +
                     " does not match the factorization");
  }
  if (max_ranks.size() + 1 != n) {
    throw ShapeError("tt_svd: expected " + std::to_string(n - 1) + " rank caps");
  }
  if (!all_finite(w)) throw NumericError("tt_svd: non-finite input");

  Shape split;
  for (std::size_t d : row_dims) split.push_back(d);
  for (std::size_t m : col_dims) split.push_back(m);
  Axes perm;
  for (std::size_t k = 0; k < n; ++k) {
    perm.push_back(k);
    perm.push_back(n + k);
  }
  Tensor rest = permute(w.reshaped(split), perm);

  using RowMatrix =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<TTCore> cores;
  std::size_t rank_in = 1;
  std::size_t remaining = w.size();
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::size_t block = rank_in * row_dims[k] * col_dims[k];
    remaining /= row_dims[k] * col_dims[k];
    Eigen::Map<const RowMatrix> c(rest.data().data(),
                                  static_cast<Eigen::Index>(block),
                                  static_cast<Eigen::Index>(remaining));
    Eigen::BDCSVD<RowMatrix> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    std::size_t keep = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) > svd_tol * s(0)) ++keep;
    }
    keep = std::max<std::size_t>(keep, 1);
    if (max_ranks[k] != 0) keep = std::min(keep, max_ranks[k]);

    RowMatrix u = svd.matrixU().leftCols(static_cast<Eigen::Index>(keep));
    Tensor core(Shape{rank_in, row_dims[k], col_dims[k], keep},
                std::vector<double>(u.data(), u.data() + u.size()));
    cores.emplace_back(permute(core, {1, 2, 0, 3}));

    RowMatrix next = s.head(static_cast<Eigen::Index>(keep)).asDiagonal() *
                     svd.matrixV().leftCols(static_cast<Eigen::Index>(keep)).transpose();
    rest = Tensor(Shape{keep * remaining},
                  std::vector<double>(next.data(), next.data() + next.size()));
    rank_in = keep;
  }
  Tensor last = std::move(rest).reshaped(
      {rank_in, row_dims[n - 1], col_dims[n - 1], 1});
  cores.emplace_back(permute(last, {1, 2, 0, 3}));
  return TTMatrix(std::move(cores));
}

TTMatrix init_tt(std::span<const std::size_t> row_dims,
                 std::span<const std::size_t> col_dims,
                 std::span<const std::size_t> ranks, std::uint64_t seed,
                 double target_std) {
  check_dims(row_dims, col_dims);
  const std::size_t n = row_dims.size();
  check_ranks(ranks, n);
  if (ranks.front() != 1 || ranks.back() != 1) {
    throw ShapeError("init_tt: boundary ranks must be 1");
  }
  if (!(target_std > 0.0)) throw ShapeError("init_tt: target_std must be positive");
  // Each dense entry is a sum of prod(internal ranks) products of n core
  // entries, so its variance is sigma^(2n) * prod(internal ranks).
  double internal = 1.0;
  for (std::size_t k = 1; k < n; ++k) internal *= static_cast<double>(ranks[k]);
  const double sigma = std::pow(target_std * target_std / internal,
                                1.0 / (2.0 * static_cast<double>(n)));
  Rng rng(seed);
  std::vector<TTCore> cores;
  for (std::size_t k = 0; k < n; ++k) {
    Tensor t(Shape{row_dims[k], col_dims[k], ranks[k], ranks[k + 1]});
    for (double& v : t.data()) v = sigma * rng.normal();
    cores.emplace_back(std::move(t));
  }
  return TTMatrix(std::move(cores));
}

std::uint64_t param_count_dense(std::uint64_t gates, std::uint64_t hidden,
                                std::uint64_t input) {
  return gates * hidden * (input + hidden);
}

std::uint64_t param_count_separate(std::uint64_t gates,
                                   std::span<const std::size_t> row_dims,
                                   std::span<const std::size_t> col_dims,
                                   std::span<const std::size_t> ranks) {
  return gates * chain_cost(row_dims, col_dims, ranks);
}

std::uint64_t param_count_fused(std::uint64_t gates, std::uint64_t rank0,
                                std::span<const std::size_t> row_dims,
                                std::span<const std::size_t> col_dims,
                                std::span<const std::size_t> ranks) {
  if (ranks.empty() || ranks.front() != rank0) {
    throw ShapeError("param_count_fused: ranks must start with r0");
  }
  return gates * rank0 + chain_cost(row_dims, col_dims, ranks);
}

std::uint64_t param_count_fused_stored(std::uint64_t gates, std::uint64_t rank0,
                                       std::span<const std::size_t> row_dims,
                                       std::span<const std::size_t> col_dims,
                                       std::span<const std::size_t> ranks) {
  return param_count_fused(gates, rank0, row_dims, col_dims, ranks) +
         gates * rank0;
}

void write_tt_record(BinaryWriter& out, const TTMatrix& ttm) {
  out.u32(kTTRecordVersion);
  out.u32(static_cast<std::uint32_t>(ttm.num_cores()));
  for (std::size_t d : ttm.row_dims()) out.u64(d);
  for (std::size_t m : ttm.col_dims()) out.u64(m);
  for (std::size_t r : ttm.ranks()) out.u64(r);
  for (const TTCore& c : ttm.cores()) out.f64_array(c.values().data());
}

TTMatrix read_tt_record(BinaryReader& in) {
  const std::uint32_t version = in.u32();
  if (version != kTTRecordVersion) {
    throw VersionError("unsupported TT record version " + std::to_string(version));
  }
  const std::uint32_t n = in.u32();
  if (n == 0 || n > 64) throw FormatError("TT record: bad core count");
  auto read_dims = [&](std::size_t count) {
    std::vector<std::size_t> v(count);
    for (auto& x : v) {
      const std::uint64_t raw = in.u64();
      if (raw == 0 || raw > (1u << 24)) throw FormatError("TT record: bad dimension");
      x = static_cast<std::size_t>(raw);
    }
    return v;
  };
  const auto rows = read_dims(n);
  const auto cols = read_dims(n);
  const auto ranks = read_dims(n + 1);
  std::vector<TTCore> cores;
  for (std::size_t k = 0; k < n; ++k) {
    const Shape shape{rows[k], cols[k], ranks[k], ranks[k + 1]};
    const std::size_t count = shape_size(shape);
    if (count * 8 > in.remaining()) throw FormatError("TT record: truncated core data");
    Tensor t(shape);
    in.f64_array(t.data());
    cores.emplace_back(std::move(t));
  }
  try {
    return TTMatrix(std::move(cores));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("TT record: ") + e.what());
  }
}

}  // namespace ttrnn
