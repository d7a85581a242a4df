#pragma once

#include "bnp/bootstrap.hpp"
#include "bnp/taskgen.hpp"

#include <span>
#include <vector>

namespace bnp {

class Rng;

struct LossOptions {
  int k = 4;
  VariantFlags flags;
  bool importance_weighted = true;  // NP family: IW bound, otherwise the mean of per-sample ELBOs
};

/// Per-task randomness of one training step, drawn before any graph is built.
struct TaskNoise {
  BootstrapDraw draw;  // bootstrap models
  Matrix z_eps;        // k x d_z standard normals, latent models
};

TaskNoise sample_task_noise(Rng& rng, const Model& model, const Task& task, const LossOptions& opts);

/// -(1/n) sum_i log N(y_i | mu_i, sigma_i^2) over all n points, conditioned on the context.
Var cnp_task_loss(Graph& g, const Model& model, const Task& task);

/// -(1/n) log (1/k) sum_j w_j with
/// log w_j = sum_i log p(y_i | x_i, z_j, context) + log q(z_j | context) - log q(z_j | X, Y)
/// and z_j = eta + rho * eps_j from the full-set posterior.
Var np_task_loss(Graph& g, const Model& model, const Task& task, const Matrix& z_eps, bool importance_weighted);

/// -(1/n) sum_i [log p_base(y_i) + log (1/k) sum_j N(y_i | mu_ij, sigma_ij^2)].
Var bnp_task_loss(Graph& g, const Model& model, const Task& task, const BootstrapDraw& draw,
                  const VariantFlags& flags);

/// Dispatches on the model kind.
Var task_loss(Graph& g, const Model& model, const Task& task, const TaskNoise& noise, const LossOptions& opts);

/// Mean task loss without gradients.
double batch_loss(const Model& model, std::span<const Task> tasks, std::span<const TaskNoise> noise,
                  const LossOptions& opts);

enum class Execution { Serial, Parallel };

/// Mean loss over the batch; writes the mean gradient into model.params().grads().
///
/// Each task is differentiated into its own buffer and the buffers are added
/// in task order, so both modes give bitwise-identical results for any
/// thread count. Serial is the reference implementation.
double loss_and_grad(Model& model, std::span<const Task> tasks, std::span<const TaskNoise> noise,
                     const LossOptions& opts, Execution exec = Execution::Parallel);

}  // namespace bnp
