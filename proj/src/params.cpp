#include "bnp/params.hpp"

#include "bnp/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bnp {

ParamId ParamStore::add(std::string name, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("parameter '" + name + "' has an empty shape");
  if (find(name).valid()) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  ParamInfo p{std::move(name), rows, cols, values_.size()};
  const auto n = values_.size() + p.size();
  values_.resize(n, 0.0);
  grads_.resize(n, 0.0);
  m_.resize(n, 0.0);
  v_.resize(n, 0.0);
  info_.push_back(std::move(p));
  return ParamId{static_cast<int>(info_.size()) - 1};
}

void ParamStore::init_uniform(ParamId id, double bound, Rng& rng) {
  auto w = value(id);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
}

void ParamStore::fill(ParamId id, double v) { value(id).setConstant(v); }

Eigen::Map<const Matrix> ParamStore::value(ParamId id) const {
  const auto& p = info(id);
  return {values_.data() + p.offset, p.rows, p.cols};
}

Eigen::Map<Matrix> ParamStore::value(ParamId id) {
  const auto& p = info(id);
  return {values_.data() + p.offset, p.rows, p.cols};
}

ParamId ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < info_.size(); ++i)
    if (info_[i].name == name) return ParamId{static_cast<int>(i)};
  return {};
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void adam_step(ParamStore& params, double lr, const AdamConfig& config) {
  auto g = params.grads();
  for (const auto& p : params.infos()) {
    for (std::size_t i = p.offset; i < p.offset + p.size(); ++i)
      if (!std::isfinite(g[i])) throw std::runtime_error("non-finite gradient in parameter '" + p.name + "'");
  }
  const auto t = params.step() + 1;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  auto w = params.values();
  auto m = params.first_moment();
  auto v = params.second_moment();
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + config.eps);
  }
  params.set_step(t);
  params.zero_grad();
}

double cosine_lr(const CosineSchedule& schedule, std::int64_t t) {
  if (t >= schedule.total_steps) return 0.0;
  if (t <= 0) return schedule.base_lr;
  const double frac = static_cast<double>(t) / static_cast<double>(schedule.total_steps);
  return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace bnp
