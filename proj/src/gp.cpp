#include "bnp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bnp {

GpPrediction gp_posterior(const KernelSpec& kernel, std::span<const double> x_obs, std::span<const double> y_obs,
                          std::span<const double> x_star, double noise_var) {
  if (x_obs.size() != y_obs.size()) throw std::invalid_argument("gp_posterior: x and y sizes differ");
  if (noise_var < 0.0) throw std::invalid_argument("gp_posterior: negative noise variance");
  const auto m = static_cast<Eigen::Index>(x_star.size());
  GpPrediction out{std::vector<double>(x_star.size(), 0.0), std::vector<double>(x_star.size())};
  for (Eigen::Index i = 0; i < m; ++i) out.var[static_cast<std::size_t>(i)] = kernel_eval(kernel, x_star[i], x_star[i]);
  if (x_obs.empty()) return out;

  Matrix k = kernel_matrix(kernel, x_obs, x_obs);
  k.diagonal().array() += noise_var;
  const Matrix l = jittered_cholesky(k, kernel.scale * kernel.scale);
  const auto tri = l.triangularView<Eigen::Lower>();
  const Eigen::Map<const Eigen::VectorXd> y(y_obs.data(), static_cast<Eigen::Index>(y_obs.size()));
  Eigen::VectorXd alpha = tri.solve(y);
  alpha = tri.transpose().solve(alpha);
  const Matrix ks = kernel_matrix(kernel, x_obs, x_star);  // n x m
  const Eigen::VectorXd mean = ks.transpose() * alpha;
  const Matrix v = tri.solve(ks);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.mean[static_cast<std::size_t>(i)] = mean(i);
    out.var[static_cast<std::size_t>(i)] = std::max(0.0, out.var[static_cast<std::size_t>(i)] - v.col(i).squaredNorm());
  }
  return out;
}

double expected_improvement(double mu, double sigma, double best) {
  if (sigma < 0.0) throw std::invalid_argument("expected_improvement: negative sigma");
  if (sigma == 0.0) return std::max(best - mu, 0.0);
  const double z = (best - mu) / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, (best - mu) * cdf + sigma * pdf);
}

}  // namespace bnp
