// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace ttrnn {

// Seeded generator with portable distributions. std::mt19937_64 is fully
// specified by the standard; the std:: distributions are not, so uniform
// integers and normals are derived here to keep runs bit-reproducible across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n), unbiased.
  std::size_t index(std::size_t n);

  double normal();

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer; derives independent stream seeds from (seed, salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

// 64-bit FNV-1a.
std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace ttrnn
