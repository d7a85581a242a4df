#pragma once

#include "bnp/gp.hpp"
#include "bnp/predict.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <span>
#include <vector>

namespace bnp {

/// A GP prior draw realised on an evenly spaced grid over [-2, 2] and
/// normalised to zero mean and unit range. Queries read the grid exactly.
struct Objective {
  std::vector<double> grid;
  std::vector<double> values;
  int argmin = 0;
  double min_value = 0.0;
  KernelFamily family = KernelFamily::Rbf;
};

constexpr int kObjectiveGrid = 1000;

/// Draws function `index` of a BO benchmark from (seed, "bo-objective", index):
/// s = 1 and the dataset's length-scale (and period) prior. `Dataset::TNoise`
/// adds t-noise to the realised values.
Objective make_objective(std::uint64_t seed, std::uint64_t index, Dataset dataset, int grid_points = kObjectiveGrid);

/// Turns raw grid values into an objective (normalisation and optimum).
Objective normalize_objective(std::vector<double> grid, std::vector<double> values, KernelFamily family);

enum class SurrogateKind { GpOracle, Model, Random };

struct Surrogate {
  SurrogateKind kind = SurrogateKind::GpOracle;
  const Model* model = nullptr;
  VariantFlags flags;
  int k = 50;
  KernelSpec oracle_kernel{KernelFamily::Rbf, 1.0, 0.4, 0.3};
  double oracle_noise = 1e-6;

  static Surrogate gp_oracle(KernelFamily family);
  static Surrogate neural(const Model& model, int k, VariantFlags flags = {});
  static Surrogate random_search();
};

struct BOStep {
  int iter = 0;
  double x = 0.0;
  double y = 0.0;
  double best = 0.0;
  double simple_regret = 0.0;
  double cum_regret = 0.0;
};

struct BOTrace {
  int function_id = 0;
  std::vector<BOStep> steps;  // init_points rows, then one row per iteration
  std::string error;          // set when the surrogate failed; steps hold the partial trace
  double final_regret() const { return steps.back().simple_regret; }
};

/// Mean and standard deviation of the surrogate at every grid point.
MixtureMoments surrogate_moments(const Surrogate& s, const Objective& f, std::span<const int> observed, Rng& rng);

/// Initial design: `init_points` grid indices from (seed, "bo-init", function_id),
/// shared by every surrogate. Each iteration queries the grid argmax of EI.
BOTrace bo_run(const Surrogate& s, const Objective& f, int iters, int init_points, std::uint64_t seed,
               int function_id);

/// header: function_id,iter,x,y,best,simple_regret,cum_regret
void write_trace_csv(std::ostream& out, std::span<const BOTrace> traces);

}  // namespace bnp
