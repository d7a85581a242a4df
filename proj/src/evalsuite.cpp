#include "bnp/evalsuite.hpp"

#include "bnp/csv.hpp"
#include "bnp/rng.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace bnp {

double gaussian_quantile(double mu, double sigma, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("gaussian_quantile: p must lie in (0, 1)");
  return mu + sigma * std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0);
}

std::vector<double> calibration_levels(int m) {
  if (m < 1) throw std::invalid_argument("calibration needs at least one level");
  std::vector<double> p(static_cast<std::size_t>(m));
  for (int l = 1; l <= m; ++l) p[static_cast<std::size_t>(l - 1)] = static_cast<double>(l) / (m + 1);
  return p;
}

double calibration_error(const EnsemblePrediction& pred, std::span<const double> y, std::span<const double> levels) {
  if (levels.empty()) throw std::invalid_argument("calibration_error: no levels");
  if (y.empty() || static_cast<int>(y.size()) != pred.targets())
    throw std::invalid_argument("calibration_error: need one label per target");
  const int k = pred.components();
  std::vector<double> z(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) z[l] = gaussian_quantile(0.0, 1.0, levels[l]);
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    for (std::size_t l = 0; l < levels.size(); ++l) {
      int below = 0;
      for (int i = 0; i < pred.targets(); ++i)
        if (y[static_cast<std::size_t>(i)] <= pred.mu(j, i) + pred.sigma(j, i) * z[l]) ++below;
      const double d = levels[l] - static_cast<double>(below) / pred.targets();
      total += d * d;
    }
  }
  return total / k;
}

double sharpness(const EnsemblePrediction& pred) {
  if (pred.mu.size() == 0) throw std::invalid_argument("sharpness: empty prediction");
  return pred.sigma.array().square().mean();
}

TaskLogLik task_loglik(const EnsemblePrediction& pred, const Task& task) {
  if (pred.targets() != task.size()) throw std::invalid_argument("task_loglik: prediction must cover every point");
  const auto lp = ensemble_log_density(pred, task.y);
  auto mean_over = [&](const std::vector<int>& idx) {
    if (idx.empty()) return 0.0;
    double s = 0.0;
    for (int i : idx) s += lp[static_cast<std::size_t>(i)];
    return s / static_cast<double>(idx.size());
  };
  return {mean_over(task.context), mean_over(task.target)};
}

TaskMetrics evaluate_task(const Model& model, const Task& task, int k, const VariantFlags& flags, Rng& rng,
                          std::span<const double> levels) {
  const ContextSet ctx{task.x_context(), task.y_context()};
  const auto pred = predict(model, ctx, task.x_all(), k, flags, rng);
  const auto ll = task_loglik(pred, task);
  EnsemblePrediction tgt{Matrix(pred.components(), static_cast<Eigen::Index>(task.target.size())),
                         Matrix(pred.components(), static_cast<Eigen::Index>(task.target.size()))};
  std::vector<double> y;
  y.reserve(task.target.size());
  for (std::size_t c = 0; c < task.target.size(); ++c) {
    tgt.mu.col(static_cast<Eigen::Index>(c)) = pred.mu.col(task.target[c]);
    tgt.sigma.col(static_cast<Eigen::Index>(c)) = pred.sigma.col(task.target[c]);
    y.push_back(task.y[static_cast<std::size_t>(task.target[c])]);
  }
  return {ll.context_ll, ll.target_ll, calibration_error(tgt, y, levels), sharpness(tgt)};
}

EvalReport evaluate(const Model& model, const EvalSpec& spec, Execution exec) {
  if (spec.n_batches < 1 || spec.batch_tasks < 1 || spec.k < 1)
    throw std::invalid_argument("evaluate: batches, batch size and k must be >= 1");
  const auto dist = TaskDistribution::for_dataset(spec.dataset);
  const auto levels = calibration_levels(spec.levels);
  const int n = spec.n_batches * spec.batch_tasks;
  EvalReport r;
  r.model = std::string(to_string(model.kind()));
  if (spec.flags.any()) r.model += "-" + spec.flags.name();
  r.dataset = std::string(to_string(spec.dataset));
  r.seed = spec.seed;
  r.n_tasks = n;
  r.tasks.resize(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(spec.n_batches));

  auto batch = [&](int b) {
    try {
      const auto tasks = sample_batch(spec.seed, "eval", static_cast<std::uint64_t>(b), spec.batch_tasks, dist);
      const auto base = derive_seed(spec.seed, "eval-predict", static_cast<std::uint64_t>(b));
      for (int t = 0; t < spec.batch_tasks; ++t) {
        Rng rng(base, "task", static_cast<std::uint64_t>(t));
        r.tasks[static_cast<std::size_t>(b * spec.batch_tasks + t)] =
            evaluate_task(model, tasks[static_cast<std::size_t>(t)], spec.k, spec.flags, rng, levels);
      }
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(b)] = e.what();
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int b = 0; b < spec.n_batches; ++b) batch(b);
  } else {
    for (int b = 0; b < spec.n_batches; ++b) batch(b);
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("evaluation failed: " + e);

  for (const auto& m : r.tasks) {
    r.context_ll += m.context_ll;
    r.target_ll += m.target_ll;
    r.ce += m.ce;
    r.sharpness += m.sharpness;
  }
  r.context_ll /= n;
  r.target_ll /= n;
  r.ce /= n;
  r.sharpness /= n;
  return r;
}

void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "model,dataset,seed,n_tasks,context_ll,target_ll,ce,sharpness\n";
  for (const auto& r : reports)
    out << r.model << ',' << r.dataset << ',' << r.seed << ',' << r.n_tasks << ',' << fmt6(r.context_ll) << ','
        << fmt6(r.target_ll) << ',' << fmt6(r.ce) << ',' << fmt6(r.sharpness) << '\n';
}

double welch_greater_p(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch test needs two samples of size >= 2");
  auto moments = [](std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, ss / static_cast<double>(v.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double sa = va / static_cast<double>(a.size());
  const double sb = vb / static_cast<double>(b.size());
  const double se = std::sqrt(sa + sb);
  if (se == 0.0) return ma > mb ? 0.0 : 1.0;
  const double t = (ma - mb) / se;
  const double dof = (sa + sb) * (sa + sb) /
                     (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  return boost::math::cdf(boost::math::complement(boost::math::students_t(dof), t));
}

}  // namespace bnp
