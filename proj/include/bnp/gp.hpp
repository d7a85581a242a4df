#pragma once

#include "bnp/taskgen.hpp"

#include <span>
#include <vector>

namespace bnp {

struct GpPrediction {
  std::vector<double> mean;
  std::vector<double> var;
};

/// Exact GP conditional at `x_star` given noisy observations, via a jittered Cholesky.
GpPrediction gp_posterior(const KernelSpec& kernel, std::span<const double> x_obs, std::span<const double> y_obs,
                          std::span<const double> x_star, double noise_var);

/// Expected improvement below `best` (minimisation). sigma = 0 gives max(best - mu, 0).
double expected_improvement(double mu, double sigma, double best);

}  // namespace bnp
