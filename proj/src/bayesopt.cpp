#include "bnp/bayesopt.hpp"

#include "bnp/csv.hpp"
#include "bnp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace bnp {

Objective normalize_objective(std::vector<double> grid, std::vector<double> values, KernelFamily family) {
  if (grid.empty() || grid.size() != values.size()) throw std::invalid_argument("objective: bad grid");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  for (auto& v : values) v = range > 0.0 ? (v - mean) / range : 0.0;
  Objective f{std::move(grid), std::move(values), 0, 0.0, family};
  f.argmin = static_cast<int>(std::min_element(f.values.begin(), f.values.end()) - f.values.begin());
  f.min_value = f.values[static_cast<std::size_t>(f.argmin)];
  return f;
}

Objective make_objective(std::uint64_t seed, std::uint64_t index, Dataset dataset, int grid_points) {
  if (grid_points < 2) throw std::invalid_argument("objective grid needs at least two points");
  std::vector<double> grid(static_cast<std::size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i) grid[static_cast<std::size_t>(i)] = -2.0 + 4.0 * i / (grid_points - 1);
  const auto dist = TaskDistribution::for_dataset(dataset);
  KernelPrior prior = dist.prior;
  prior.scale_lo = prior.scale_hi = 1.0;
  Rng rng(seed, "bo-objective", index);
  const KernelSpec spec = prior.sample(rng);
  auto values = sample_gp(rng, spec, grid, 0.0);
  if (dist.noise.kind == NoiseKind::StudentT) {
    Task t{grid, values, {}, {}};
    apply_t_noise(t, rng, dist.noise.gamma_lo, dist.noise.gamma_hi, dist.noise.t_dof);
    values = std::move(t.y);
  }
  return normalize_objective(std::move(grid), std::move(values), spec.family);
}

Surrogate Surrogate::gp_oracle(KernelFamily family) {
  Surrogate s;
  s.kind = SurrogateKind::GpOracle;
  s.oracle_kernel = {family, 1.0, 0.4, 0.3};
  return s;
}

Surrogate Surrogate::neural(const Model& model, int k, VariantFlags flags) {
  Surrogate s;
  s.kind = SurrogateKind::Model;
  s.model = &model;
  s.k = k;
  s.flags = flags;
  return s;
}

Surrogate Surrogate::random_search() {
  Surrogate s;
  s.kind = SurrogateKind::Random;
  return s;
}

MixtureMoments surrogate_moments(const Surrogate& s, const Objective& f, std::span<const int> observed, Rng& rng) {
  std::vector<double> xo;
  std::vector<double> yo;
  for (int i : observed) {
    xo.push_back(f.grid[static_cast<std::size_t>(i)]);
    yo.push_back(f.values[static_cast<std::size_t>(i)]);
  }
  switch (s.kind) {
    case SurrogateKind::GpOracle: {
      auto p = gp_posterior(s.oracle_kernel, xo, yo, f.grid, s.oracle_noise);
      for (auto& v : p.var) v = std::sqrt(v);
      return {std::move(p.mean), std::move(p.var)};
    }
    case SurrogateKind::Model: {
      if (!s.model) throw std::invalid_argument("model surrogate without a model");
      const ContextSet ctx{Eigen::Map<const Matrix>(xo.data(), static_cast<Eigen::Index>(xo.size()), 1),
                           Eigen::Map<const Matrix>(yo.data(), static_cast<Eigen::Index>(yo.size()), 1)};
      const Matrix xt = Eigen::Map<const Matrix>(f.grid.data(), static_cast<Eigen::Index>(f.grid.size()), 1);
      return mixture_moments(predict(*s.model, ctx, xt, s.k, s.flags, rng));
    }
    case SurrogateKind::Random: break;
  }
  throw std::invalid_argument("random search has no surrogate moments");
}

BOTrace bo_run(const Surrogate& s, const Objective& f, int iters, int init_points, std::uint64_t seed,
               int function_id) {
  if (iters < 1 || init_points < 1) throw std::invalid_argument("bo_run: iters and init_points must be >= 1");
  const int grid = static_cast<int>(f.grid.size());
  BOTrace trace{function_id, {}, {}};
  std::vector<int> observed;
  double best = 0.0;
  double cum = 0.0;
  auto observe = [&](int idx) {
    const double y = f.values[static_cast<std::size_t>(idx)];
    best = observed.empty() ? y : std::min(best, y);
    observed.push_back(idx);
    const double regret = best - f.min_value;
    cum += regret;
    trace.steps.push_back({static_cast<int>(trace.steps.size()), f.grid[static_cast<std::size_t>(idx)], y, best,
                           regret, cum});
  };

  Rng init(seed, "bo-init", static_cast<std::uint64_t>(function_id));
  for (int i = 0; i < init_points; ++i) observe(init.uniform_int(0, grid - 1));

  const auto stream = derive_seed(seed, "bo-surrogate", static_cast<std::uint64_t>(function_id));
  for (int it = 0; it < iters; ++it) try {
    Rng rng(stream, "iter", static_cast<std::uint64_t>(it));
    if (s.kind == SurrogateKind::Random) {
      observe(rng.uniform_int(0, grid - 1));
      continue;
    }
    const auto m = surrogate_moments(s, f, observed, rng);
    int arg = 0;
    double top = -1.0;
    for (int i = 0; i < grid; ++i) {
      const double ei = expected_improvement(m.mean[static_cast<std::size_t>(i)], m.stddev[static_cast<std::size_t>(i)], best);
      if (!std::isfinite(ei)) throw std::runtime_error("surrogate produced a non-finite acquisition value");
      if (ei > top) {
        top = ei;
        arg = i;
      }
    }
    observe(arg);
  } catch (const std::exception& e) {
    trace.error = e.what();
    break;
  }
  return trace;
}

void write_trace_csv(std::ostream& out, std::span<const BOTrace> traces) {
  out << "function_id,iter,x,y,best,simple_regret,cum_regret\n";
  for (const auto& t : traces)
    for (const auto& s : t.steps)
      out << t.function_id << ',' << s.iter << ',' << fmt6(s.x) << ',' << fmt6(s.y) << ',' << fmt6(s.best) << ','
          << fmt6(s.simple_regret) << ',' << fmt6(s.cum_regret) << '\n';
}

}  // namespace bnp
