#include "bnp/train.hpp"

#include "bnp/csv.hpp"
#include "bnp/rng.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace bnp {

namespace {

struct LogRow {
  std::int64_t step;
  double loss;
  double lr;
  double wall_ms;
};

void write_log(const std::filesystem::path& dir, const std::vector<LogRow>& rows) {
  if (dir.empty()) return;
  write_atomically(dir / "train_log.csv", [&](std::ostream& out) {
    out << "step,loss,lr,wall_ms\n";
    for (const auto& r : rows) out << r.step << ',' << fmt6(r.loss) << ',' << fmt6(r.lr) << ',' << fmt6(r.wall_ms) << '\n';
  });
}

void clip_gradients(ParamStore& params, double max_norm) {
  if (max_norm <= 0.0) return;
  auto g = params.grads();
  const double norm = std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
  if (norm > max_norm)
    for (auto& v : g) v *= max_norm / norm;
}

}  // namespace

std::vector<Task> training_batch(const TrainConfig& config, std::int64_t step) {
  return sample_batch(config.seed, "train", static_cast<std::uint64_t>(step), config.batch_tasks,
                      TaskDistribution::for_dataset(config.dataset));
}

std::vector<TaskNoise> training_noise(const TrainConfig& config, const Model& model, std::int64_t step,
                                      std::span<const Task> tasks) {
  const LossOptions opts{config.k_train, config.flags, config.importance_weighted};
  const auto base = derive_seed(config.seed, "noise", static_cast<std::uint64_t>(step));
  std::vector<TaskNoise> out;
  out.reserve(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    Rng rng(base, "task", t);
    out.push_back(sample_task_noise(rng, model, tasks[t], opts));
  }
  return out;
}

TrainResult resume(Checkpoint start, const TrainOptions& options) {
  const TrainConfig config = start.config;
  config.validate();
  TrainResult result{std::move(start), {}};
  Checkpoint& ckpt = result.checkpoint;
  const LossOptions opts{config.k_train, config.flags, config.importance_weighted};
  const CosineSchedule schedule{config.lr0, config.total_steps};
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<LogRow> log;
  double window = 0.0;
  std::int64_t window_count = 0;
  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);

  auto abort = [&](const std::string& why) {
    if (!options.out_dir.empty()) {
      save_checkpoint(checkpoint_path(options.out_dir, ckpt.step), ckpt);
      write_log(options.out_dir, log);
    }
    throw std::runtime_error("training diverged at step " + std::to_string(ckpt.step) + ": " + why);
  };

  while (ckpt.step < config.total_steps) {
    const auto step = ckpt.step;
    const auto tasks = training_batch(config, step);
    const auto noise = training_noise(config, ckpt.model, step, tasks);
    const double lr = cosine_lr(schedule, step);
    Checkpoint before_update = ckpt;
    double loss = 0.0;
    try {
      loss = loss_and_grad(ckpt.model, tasks, noise, opts, options.execution);
      if (!std::isfinite(loss)) throw std::runtime_error("loss is " + std::to_string(loss));
      clip_gradients(ckpt.model.params(), config.grad_clip);
      adam_step(ckpt.model.params(), lr);
    } catch (const std::runtime_error& e) {
      ckpt = std::move(before_update);
      ckpt.model.params().zero_grad();
      abort(e.what());
    }
    ++ckpt.step;
    result.losses.push_back(loss);
    window += loss;
    ++window_count;
    if (ckpt.step % config.log_every == 0 || ckpt.step == config.total_steps) {
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      log.push_back({ckpt.step, window / static_cast<double>(window_count), lr, ms});
      if (options.on_log) options.on_log(ckpt.step, log.back().loss, lr);
      window = 0.0;
      window_count = 0;
    }
    if (!options.out_dir.empty() && config.checkpoint_every > 0 && ckpt.step % config.checkpoint_every == 0 &&
        ckpt.step != config.total_steps)
      save_checkpoint(checkpoint_path(options.out_dir, ckpt.step), ckpt);
  }
  if (!options.out_dir.empty()) {
    save_checkpoint(checkpoint_path(options.out_dir, ckpt.step), ckpt);
    write_log(options.out_dir, log);
  }
  return result;
}

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  return resume(Checkpoint::fresh(config), options);
}

}  // namespace bnp
