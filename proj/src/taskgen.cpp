#include "bnp/taskgen.hpp"

#include "bnp/csv.hpp"
#include "bnp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace bnp {

namespace {

Matrix column(const std::vector<double>& v, const std::vector<int>& idx) {
  Matrix m(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t i = 0; i < idx.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[static_cast<std::size_t>(idx[i])];
  return m;
}

Matrix column(const std::vector<double>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

constexpr int kMaxTaskAttempts = 16;

}  // namespace

Matrix Task::x_all() const { return column(x); }
Matrix Task::y_all() const { return column(y); }
Matrix Task::x_context() const { return column(x, context); }
Matrix Task::y_context() const { return column(y, context); }

std::string_view to_string(Dataset d) {
  switch (d) {
    case Dataset::Rbf: return "rbf";
    case Dataset::Matern: return "matern";
    case Dataset::Periodic: return "periodic";
    case Dataset::TNoise: return "t-noise";
  }
  return "?";
}

Dataset parse_dataset(std::string_view s) {
  if (s == "rbf") return Dataset::Rbf;
  if (s == "matern") return Dataset::Matern;
  if (s == "periodic") return Dataset::Periodic;
  if (s == "t-noise" || s == "rbf-tnoise") return Dataset::TNoise;
  throw std::invalid_argument("unknown dataset '" + std::string(s) + "' (expected rbf|matern|periodic|t-noise)");
}

std::string_view to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::Rbf: return "rbf";
    case KernelFamily::Matern52: return "matern";
    case KernelFamily::Periodic: return "periodic";
  }
  return "?";
}

KernelFamily parse_kernel_family(std::string_view s) {
  if (s == "rbf") return KernelFamily::Rbf;
  if (s == "matern") return KernelFamily::Matern52;
  if (s == "periodic") return KernelFamily::Periodic;
  throw std::invalid_argument("unknown kernel '" + std::string(s) + "' (expected rbf|matern|periodic)");
}

KernelSpec KernelPrior::sample(Rng& rng) const {
  KernelSpec s;
  s.family = family;
  s.scale = rng.uniform(scale_lo, scale_hi);
  s.length = rng.uniform(length_lo, length_hi);
  if (family == KernelFamily::Periodic) s.period = rng.uniform(period_lo, period_hi);
  return s;
}

KernelPrior KernelPrior::fixed(const KernelSpec& spec) {
  KernelPrior p;
  p.family = spec.family;
  p.scale_lo = p.scale_hi = spec.scale;
  p.length_lo = p.length_hi = spec.length;
  p.period_lo = p.period_hi = spec.period;
  return p;
}

TaskDistribution TaskDistribution::for_dataset(Dataset d, SizeRule sizes) {
  TaskDistribution t;
  t.sizes = sizes;
  switch (d) {
    case Dataset::Rbf: t.prior.family = KernelFamily::Rbf; break;
    case Dataset::Matern: t.prior.family = KernelFamily::Matern52; break;
    case Dataset::Periodic: t.prior.family = KernelFamily::Periodic; break;
    case Dataset::TNoise:
      t.prior.family = KernelFamily::Rbf;
      t.noise.kind = NoiseKind::StudentT;
      break;
  }
  return t;
}

double kernel_eval(const KernelSpec& spec, double x, double xp) {
  const double d = std::abs(x - xp);
  const double s2 = spec.scale * spec.scale;
  const double l = spec.length;
  switch (spec.family) {
    case KernelFamily::Rbf: return s2 * std::exp(-d * d / (2.0 * l * l));
    case KernelFamily::Matern52: {
      const double r = std::sqrt(5.0) * d / l;
      return s2 * (1.0 + r + 5.0 * d * d / (3.0 * l * l)) * std::exp(-r);
    }
    case KernelFamily::Periodic: {
      // |x - x'| inside the sine; the squared distance does not give a PSD kernel.
      const double sn = std::sin(std::numbers::pi * d / spec.period);
      return s2 * std::exp(-2.0 * sn * sn / (l * l));
    }
  }
  return 0.0;
}

Matrix kernel_matrix(const KernelSpec& spec, std::span<const double> a, std::span<const double> b) {
  Matrix k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel_eval(spec, a[i], b[j]);
  return k;
}

Matrix jittered_cholesky(const Matrix& k, double scale_sq) {
  const Eigen::Index n = k.rows();
  for (double jitter = 1e-6 * scale_sq; jitter <= 1e-2 * scale_sq * (1.0 + 1e-9); jitter *= 10.0) {
    Eigen::LLT<Matrix> llt(k + jitter * Matrix::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw std::runtime_error("cholesky failed after jitter escalation");
}

std::vector<double> sample_gp(Rng& rng, const KernelSpec& spec, std::span<const double> x, double noise_var) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Matrix k = kernel_matrix(spec, x, x);
  k.diagonal().array() += noise_var;
  const Matrix l = jittered_cholesky(k, spec.scale * spec.scale);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
  const Eigen::VectorXd y = l * z;
  return {y.data(), y.data() + n};
}

Task sample_task(Rng& rng, const KernelPrior& prior, const NoiseSpec& noise, const SizeRule& sizes) {
  if (sizes.min_context < 1 || sizes.min_target < 1 || sizes.max_context < sizes.min_context ||
      sizes.max_total < sizes.max_context + sizes.min_target)
    throw std::invalid_argument("sample_task: inconsistent size rule");
  for (int attempt = 0; attempt < kMaxTaskAttempts; ++attempt) {
    const KernelSpec spec = prior.sample(rng);
    const int n_ctx = rng.uniform_int(sizes.min_context, sizes.max_context);
    const int n_tar = rng.uniform_int(sizes.min_target, sizes.max_total - n_ctx);
    const int n = n_ctx + n_tar;
    Task t;
    t.x.resize(static_cast<std::size_t>(n));
    for (auto& v : t.x) v = rng.uniform(-2.0, 2.0);
    try {
      t.y = sample_gp(rng, spec, t.x, noise.gaussian_var);
    } catch (const std::runtime_error&) {
      continue;
    }
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    t.context.assign(perm.begin(), perm.begin() + n_ctx);
    t.target.assign(perm.begin() + n_ctx, perm.end());
    std::sort(t.context.begin(), t.context.end());
    std::sort(t.target.begin(), t.target.end());
    if (noise.kind == NoiseKind::StudentT) apply_t_noise(t, rng, noise.gamma_lo, noise.gamma_hi, noise.t_dof);
    return t;
  }
  throw std::runtime_error("sample_task: could not generate a task after repeated Cholesky failures");
}

Task sample_task(Rng& rng, const TaskDistribution& dist) { return sample_task(rng, dist.prior, dist.noise, dist.sizes); }

void apply_t_noise(Task& task, Rng& rng, double gamma_lo, double gamma_hi, double dof) {
  const double gamma = gamma_lo == gamma_hi ? gamma_lo : rng.uniform(gamma_lo, gamma_hi);
  if (gamma == 0.0) return;
  for (auto& y : task.y) y += gamma * rng.student_t(dof);
}

std::vector<Task> sample_batch(std::uint64_t seed, std::string_view tag, std::uint64_t batch, int batch_tasks,
                               const TaskDistribution& dist) {
  std::vector<Task> out(static_cast<std::size_t>(batch_tasks));
  const std::uint64_t base = derive_seed(seed, tag, batch);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < batch_tasks; ++t) {
    Rng rng(base, "task", static_cast<std::uint64_t>(t));
    out[static_cast<std::size_t>(t)] = sample_task(rng, dist);
  }
  return out;
}

void write_tasks_csv(std::ostream& out, std::span<const Task> tasks) {
  out << "task_id,point_id,is_context,x,y\n";
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    std::vector<char> is_ctx(task.x.size(), 0);
    for (int c : task.context) is_ctx[static_cast<std::size_t>(c)] = 1;
    for (std::size_t i = 0; i < task.x.size(); ++i)
      out << t << ',' << i << ',' << int(is_ctx[i]) << ',' << fmt6(task.x[i]) << ',' << fmt6(task.y[i]) << '\n';
  }
}

}  // namespace bnp
