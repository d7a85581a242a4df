#pragma once

#include "bnp/checkpoint.hpp"
#include "bnp/objectives.hpp"
#include "bnp/predict.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bnp {

/// mu + sigma sqrt(2) erfinv(2p - 1). Throws std::domain_error unless 0 < p < 1.
double gaussian_quantile(double mu, double sigma, double p);

/// p_l = l / (m + 1), l = 1..m.
std::vector<double> calibration_levels(int m);

/// (1/k) sum_j sum_l (p_l - phat_l(j))^2 where phat_l(j) is the fraction of
/// targets with y <= F_j^{-1}(p_l) under component j.
double calibration_error(const EnsemblePrediction& pred, std::span<const double> y, std::span<const double> levels);

/// Mean of sigma^2 over components and targets.
double sharpness(const EnsemblePrediction& pred);

struct TaskLogLik {
  double context_ll = 0.0;
  double target_ll = 0.0;
};

/// Mixture log-density per point, averaged separately over the context and
/// target indices. `pred` covers all n points of the task in order.
TaskLogLik task_loglik(const EnsemblePrediction& pred, const Task& task);

struct TaskMetrics {
  double context_ll = 0.0;
  double target_ll = 0.0;
  double ce = 0.0;
  double sharpness = 0.0;
};

/// Predicts all points of `task` from its context; CE and sharpness are over targets.
TaskMetrics evaluate_task(const Model& model, const Task& task, int k, const VariantFlags& flags, Rng& rng,
                          std::span<const double> levels);

struct EvalSpec {
  Dataset dataset = Dataset::Rbf;
  int n_batches = 3000;
  int batch_tasks = 16;
  int k = 50;
  std::uint64_t seed = 1;
  VariantFlags flags;  // evaluation-time pipeline, e.g. naive bootstrap on a CNP
  int levels = 10;
};

struct EvalReport {
  std::string model;
  std::string dataset;
  std::uint64_t seed = 0;
  int n_tasks = 0;
  double context_ll = 0.0;
  double target_ll = 0.0;
  double ce = 0.0;
  double sharpness = 0.0;
  std::vector<TaskMetrics> tasks;
};

/// Evaluation tasks come from (seed, "eval", batch); prediction noise from
/// (seed, "eval-predict", batch). Tasks are independent, and the report
/// averages them in task order.
EvalReport evaluate(const Model& model, const EvalSpec& spec, Execution exec = Execution::Parallel);

/// header: model,dataset,seed,n_tasks,context_ll,target_ll,ce,sharpness
void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports);

/// One-sided Welch test of mean(a) > mean(b); returns the p-value.
double welch_greater_p(std::span<const double> a, std::span<const double> b);

}  // namespace bnp
