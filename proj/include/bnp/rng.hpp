#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace bnp {

/// Mixes (seed, purpose tag, index) into an independent 64-bit stream seed.
///
/// Every random stream in the library is derived this way, so any task or
/// bootstrap draw can be regenerated from the global seed alone and parallel
/// workers never share a generator. The rule is
/// splitmix64(splitmix64(seed ^ fnv1a(tag)) + index).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0)
      : engine_(derive_seed(seed, tag, index)) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  /// Integer uniform on the closed range [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  /// Student-t draw as z / sqrt(chi2(dof) / dof).
  double student_t(double dof);
  /// `count` indices drawn uniformly with replacement from [0, n).
  std::vector<int> resample_indices(int n, int count);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bnp
