// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include "ttrnn/tensor.hpp"

#include <Eigen/Core>

namespace ttrnn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace detail {
namespace {

thread_local std::uint64_t g_macs = 0;

template <class T>
void gemm_impl(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n, bool trans_a, bool trans_b) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Idx = Eigen::Index;
  Eigen::Map<Mat> out(c, static_cast<Idx>(m), static_cast<Idx>(n));
  const Idx mi = static_cast<Idx>(m);
  const Idx ki = static_cast<Idx>(k);
  const Idx ni = static_cast<Idx>(n);
  if (!trans_a && !trans_b) {
    out.noalias() = Eigen::Map<const Mat>(a, mi, ki) * Eigen::Map<const Mat>(b, ki, ni);
  } else if (trans_a && !trans_b) {
    out.noalias() = Eigen::Map<const Mat>(a, ki, mi).transpose() *
                    Eigen::Map<const Mat>(b, ki, ni);
  } else if (!trans_a && trans_b) {
    out.noalias() = Eigen::Map<const Mat>(a, mi, ki) *
                    Eigen::Map<const Mat>(b, ni, ki).transpose();
  } else {
    out.noalias() = Eigen::Map<const Mat>(a, ki, mi).transpose() *
                    Eigen::Map<const Mat>(b, ni, ki).transpose();
  }
}

}  // namespace

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool trans_a, bool trans_b) {
  gemm_impl(a, b, c, m, k, n, trans_a, trans_b);
}

void gemm(const float* a, const float* b, float* c, std::size_t m,
          std::size_t k, std::size_t n, bool trans_a, bool trans_b) {
  gemm_impl(a, b, c, m, k, n, trans_a, trans_b);
}

void add_macs(std::uint64_t count) { g_macs += count; }

}  // namespace detail

MacCounter::MacCounter() : start_(detail::g_macs) {}
MacCounter::~MacCounter() = default;
std::uint64_t MacCounter::count() const { return detail::g_macs - start_; }

}  // namespace ttrnn
