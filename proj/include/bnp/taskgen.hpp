#pragma once

#include "bnp/params.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bnp {

class Rng;

enum class KernelFamily { Rbf, Matern52, Periodic };

struct KernelSpec {
  KernelFamily family = KernelFamily::Rbf;
  double scale = 1.0;   // s
  double length = 1.0;  // l
  double period = 1.0;  // p, periodic only
};

/// Hyperparameter ranges; each draw is uniform on [lo, hi].
struct KernelPrior {
  KernelFamily family = KernelFamily::Rbf;
  double scale_lo = 0.1, scale_hi = 1.0;
  double length_lo = 0.1, length_hi = 0.6;
  double period_lo = 0.1, period_hi = 0.5;

  KernelSpec sample(Rng& rng) const;
  static KernelPrior fixed(const KernelSpec& spec);
};

enum class NoiseKind { Gaussian, StudentT };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Gaussian;
  double gaussian_var = 1e-2;
  double t_dof = 2.1;
  double gamma_lo = 0.0;  // t-noise scale range
  double gamma_hi = 0.15;
};

/// |c| ~ U{min_context..max_context}, n - |c| ~ U{min_target..max_total-|c|}.
struct SizeRule {
  int min_context = 3;
  int max_context = 47;
  int min_target = 3;
  int max_total = 50;

  static SizeRule standard() { return {}; }
  /// The larger training-size rule (up to 200 points).
  static SizeRule large() { return {3, 197, 3, 200}; }
};

/// One regression episode. `context` and `target` partition 0..n-1 and are sorted.
struct Task {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<int> context;
  std::vector<int> target;

  int size() const { return static_cast<int>(x.size()); }
  Matrix x_all() const;
  Matrix y_all() const;
  Matrix x_context() const;
  Matrix y_context() const;
};

enum class Dataset { Rbf, Matern, Periodic, TNoise };

std::string_view to_string(Dataset d);
Dataset parse_dataset(std::string_view s);
std::string_view to_string(KernelFamily f);
KernelFamily parse_kernel_family(std::string_view s);

/// Everything needed to draw a task of a given evaluation/training dataset.
struct TaskDistribution {
  KernelPrior prior;
  NoiseSpec noise;
  SizeRule sizes;

  static TaskDistribution for_dataset(Dataset d, SizeRule sizes = SizeRule::standard());
};

double kernel_eval(const KernelSpec& spec, double x, double xp);
Matrix kernel_matrix(const KernelSpec& spec, std::span<const double> a, std::span<const double> b);

/// Lower Cholesky factor of `k`, adding jitter starting at 1e-6 * s^2 and
/// escalating x10 up to 1e-2 * s^2. Throws std::runtime_error when all fail.
Matrix jittered_cholesky(const Matrix& k, double scale_sq);

/// One draw of f(x) + noise from a zero-mean GP with `spec`.
std::vector<double> sample_gp(Rng& rng, const KernelSpec& spec, std::span<const double> x, double noise_var);

/// Draws a task. Cholesky failures resample the whole task from the same stream.
Task sample_task(Rng& rng, const KernelPrior& prior, const NoiseSpec& noise, const SizeRule& sizes);
Task sample_task(Rng& rng, const TaskDistribution& dist);

/// Adds gamma * t(dof) noise to every label, with one gamma ~ U[gamma_lo, gamma_hi] per task.
void apply_t_noise(Task& task, Rng& rng, double gamma_lo, double gamma_hi, double dof = 2.1);

/// Task t of batch b is drawn from the stream (seed, tag, b) -> ("task", t), so
/// batches can be generated in any order or in parallel.
std::vector<Task> sample_batch(std::uint64_t seed, std::string_view tag, std::uint64_t batch, int batch_tasks,
                               const TaskDistribution& dist);

/// CSV with header task_id,point_id,is_context,x,y.
void write_tasks_csv(std::ostream& out, std::span<const Task> tasks);

}  // namespace bnp
