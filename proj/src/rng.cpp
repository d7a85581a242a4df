#include "bnp/rng.hpp"

#include <cmath>

namespace bnp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ fnv1a(tag)) + index);
}

double Rng::student_t(double dof) {
  const double z = normal();
  const double chi2 = std::chi_squared_distribution<double>(dof)(engine_);
  return z / std::sqrt(chi2 / dof);
}

std::vector<int> Rng::resample_indices(int n, int count) {
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> out(static_cast<std::size_t>(count));
  for (auto& i : out) i = pick(engine_);
  return out;
}

}  // namespace bnp
