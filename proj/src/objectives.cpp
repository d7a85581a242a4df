#include "bnp/objectives.hpp"

#include "bnp/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace bnp {

namespace {

ContextStack context_stack(Graph& g, const Task& task) {
  return {g.constant(task.x_context()), g.constant(task.y_context()), 1, static_cast<int>(task.context.size())};
}

Var row_sums(Graph& g, Var a) { return g.matmul(a, g.constant(Matrix::Ones(g.cols(a), 1))); }

void check_task(const Task& task) {
  if (task.context.empty() || task.size() == 0) throw std::invalid_argument("task needs a context and points");
}

}  // namespace

TaskNoise sample_task_noise(Rng& rng, const Model& model, const Task& task, const LossOptions& opts) {
  if (opts.k < 1) throw std::invalid_argument("k must be >= 1");
  TaskNoise n;
  if (has_latent(model.kind())) {
    n.z_eps.resize(opts.k, model.arch().latent);
    for (Eigen::Index i = 0; i < n.z_eps.size(); ++i) n.z_eps.data()[i] = rng.normal();
  } else if (is_bootstrap(model.kind()) && !opts.flags.naive) {
    n.draw = BootstrapDraw::sample(rng, static_cast<int>(task.context.size()), opts.k, !opts.flags.skip_paired);
  }
  return n;
}

Var cnp_task_loss(Graph& g, const Model& model, const Task& task) {
  check_task(task);
  const Var x = g.constant(task.x_all());
  const Var y = g.constant(task.y_all());
  const auto head = model.decode(g, model.represent(g, context_stack(g, task), x), x);
  return g.scale(g.mean(g.normal_log_prob(y, head.mu, head.sigma)), -1.0);
}

Var np_task_loss(Graph& g, const Model& model, const Task& task, const Matrix& z_eps, bool importance_weighted) {
  check_task(task);
  const int k = static_cast<int>(z_eps.rows());
  const int n = task.size();
  if (k < 1 || z_eps.cols() != model.arch().latent) throw std::invalid_argument("np loss: bad latent noise shape");
  const Matrix xv = task.x_all();
  const Matrix yv = task.y_all();
  const Var x = g.constant(xv);
  const Var y = g.constant(yv);
  const ContextStack ctx = context_stack(g, task);
  const ContextStack all{x, y, 1, n};

  const auto q_full = model.latent(g, all);
  const auto q_ctx = model.latent(g, ctx);
  const Var mean_full = g.tile_rows(q_full.mean, k);
  const Var std_full = g.tile_rows(q_full.std, k);
  const Var z = g.add(mean_full, g.mul(std_full, g.constant(z_eps)));

  const Var phi = model.represent(g, ctx, x);
  const Var rep = g.concat_cols({k == 1 ? phi : g.tile_rows(phi, k), n == 1 ? z : g.repeat_rows(z, n)});
  const Var x_tiled = k == 1 ? x : g.tile_rows(x, k);
  const Var y_tiled = k == 1 ? y : g.tile_rows(y, k);
  const auto head = model.decode(g, rep, x_tiled);
  const Var lp = g.normal_log_prob(y_tiled, head.mu, head.sigma);  // k*n x 1
  const Var recon = g.scale(g.block_mean_rows(lp, n), static_cast<double>(n));  // k x 1

  const Var log_q_ctx = row_sums(g, g.normal_log_prob(z, g.tile_rows(q_ctx.mean, k), g.tile_rows(q_ctx.std, k)));
  const Var log_q_full = row_sums(g, g.normal_log_prob(z, mean_full, std_full));
  const Var log_w = g.add(recon, g.sub(log_q_ctx, log_q_full));

  Var objective;
  if (importance_weighted) {
    objective = g.affine(g.logsumexp_rows(g.unstack_blocks(log_w, k)), 1.0, -std::log(static_cast<double>(k)));
  } else {
    objective = g.mean(log_w);
  }
  return g.scale(objective, -1.0 / n);
}

Var bnp_task_loss(Graph& g, const Model& model, const Task& task, const BootstrapDraw& draw,
                  const VariantFlags& flags) {
  check_task(task);
  if (flags.naive) return cnp_task_loss(g, model, task);
  const ContextSet ctx{task.x_context(), task.y_context()};
  const Matrix yv = task.y_all();
  const auto heads = bootstrap_heads(g, model, ctx, task.x_all(), draw, flags);
  const Var y_tiled = g.constant(heads.k == 1 ? yv : Matrix(yv.replicate(heads.k, 1)));
  const Var mix = g.mean(mixture_log_prob(g, y_tiled, heads.components, heads.k));
  if (flags.skip_base_loss) return g.scale(mix, -1.0);
  const Var base = g.mean(g.normal_log_prob(g.constant(yv), heads.base.mu, heads.base.sigma));
  return g.scale(g.add(base, mix), -1.0);
}

Var task_loss(Graph& g, const Model& model, const Task& task, const TaskNoise& noise, const LossOptions& opts) {
  switch (model.kind()) {
    case ModelKind::Cnp:
    case ModelKind::Canp: return cnp_task_loss(g, model, task);
    case ModelKind::Np:
    case ModelKind::Anp: return np_task_loss(g, model, task, noise.z_eps, opts.importance_weighted);
    case ModelKind::Bnp:
    case ModelKind::Banp: return bnp_task_loss(g, model, task, noise.draw, opts.flags);
  }
  throw std::logic_error("unreachable");
}

double batch_loss(const Model& model, std::span<const Task> tasks, std::span<const TaskNoise> noise,
                  const LossOptions& opts) {
  if (tasks.empty() || tasks.size() != noise.size()) throw std::invalid_argument("batch_loss: empty or mismatched batch");
  double total = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    Graph g(false);
    total += g.scalar_value(task_loss(g, model, tasks[i], noise[i], opts));
  }
  return total / static_cast<double>(tasks.size());
}

double loss_and_grad(Model& model, std::span<const Task> tasks, std::span<const TaskNoise> noise,
                     const LossOptions& opts, Execution exec) {
  if (tasks.empty() || tasks.size() != noise.size())
    throw std::invalid_argument("loss_and_grad: empty or mismatched batch");
  const auto b = static_cast<std::ptrdiff_t>(tasks.size());
  const std::size_t p = model.params().size();
  std::vector<std::vector<double>> grads(tasks.size(), std::vector<double>(p, 0.0));
  std::vector<double> losses(tasks.size(), 0.0);
  std::vector<std::string> errors(tasks.size());

  auto one = [&](std::ptrdiff_t i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      Graph g;
      const Var loss = task_loss(g, model, tasks[u], noise[u], opts);
      losses[u] = g.scalar_value(loss);
      g.backward(loss, model.params(), grads[u]);
    } catch (const std::exception& e) {
      errors[u] = e.what();
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < b; ++i) one(i);
  } else {
    for (std::ptrdiff_t i = 0; i < b; ++i) one(i);
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw std::runtime_error("task " + std::to_string(i) + ": " + errors[i]);

  auto out = model.params().grads();
  std::fill(out.begin(), out.end(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    total += losses[i];
    for (std::size_t j = 0; j < p; ++j) out[j] += grads[i][j];
  }
  const double inv = 1.0 / static_cast<double>(tasks.size());
  for (auto& v : out) v *= inv;
  return total * inv;
}

}  // namespace bnp
