#include "bnp/bootstrap.hpp"

#include "bnp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace bnp {

namespace {

Matrix tile(const Matrix& a, int times) {
  Matrix r(a.rows() * times, a.cols());
  for (int t = 0; t < times; ++t) r.middleRows(t * a.rows(), a.rows()) = a;
  return r;
}

EnsemblePrediction to_ensemble(const Graph& g, const GaussianHead& head, int k, int t) {
  EnsemblePrediction p;
  p.mu = Eigen::Map<const Matrix>(g.value(head.mu).data(), k, t);
  p.sigma = Eigen::Map<const Matrix>(g.value(head.sigma).data(), k, t);
  return p;
}

}  // namespace

void VariantFlags::validate() const {
  if (naive && (skip_paired || skip_adaptation || skip_base_loss))
    throw std::invalid_argument("the naive bootstrap variant cannot be combined with other ablation switches");
}

std::string VariantFlags::name() const {
  if (naive) return "naive";
  std::string s;
  auto add = [&](const char* part) { s += s.empty() ? part : std::string("+") + part; };
  if (skip_paired) add("no-paired");
  if (skip_adaptation) add("no-adapt");
  if (skip_base_loss) add("no-baseloss");
  return s.empty() ? "full" : s;
}

VariantFlags VariantFlags::parse(std::string_view name) {
  VariantFlags f;
  std::size_t pos = 0;
  while (pos <= name.size()) {
    const auto end = std::min(name.find('+', pos), name.size());
    const auto part = name.substr(pos, end - pos);
    if (part == "full") {
    } else if (part == "naive") {
      f.naive = true;
    } else if (part == "no-paired") {
      f.skip_paired = true;
    } else if (part == "no-adapt") {
      f.skip_adaptation = true;
    } else if (part == "no-baseloss") {
      f.skip_base_loss = true;
    } else {
      throw std::invalid_argument("unknown variant '" + std::string(part) +
                                  "' (expected full|naive|no-paired|no-adapt|no-baseloss)");
    }
    pos = end + 1;
  }
  f.validate();
  return f;
}

BootstrapDraw BootstrapDraw::sample(Rng& rng, int context_size, int k, bool with_paired) {
  if (context_size < 1 || k < 1) throw std::invalid_argument("bootstrap needs |c| >= 1 and k >= 1");
  BootstrapDraw d;
  if (with_paired)
    for (int j = 0; j < k; ++j) d.paired.push_back(rng.resample_indices(context_size, context_size));
  for (int j = 0; j < k; ++j) d.residual.push_back(rng.resample_indices(context_size, context_size));
  return d;
}

ContextSet gather_context(const ContextSet& context, std::span<const int> index) {
  ContextSet out{Matrix(static_cast<Eigen::Index>(index.size()), context.x.cols()),
                 Matrix(static_cast<Eigen::Index>(index.size()), context.y.cols())};
  for (std::size_t i = 0; i < index.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = context.x.row(index[i]);
    out.y.row(static_cast<Eigen::Index>(i)) = context.y.row(index[i]);
  }
  return out;
}

std::vector<ContextSet> paired_bootstrap(Rng& rng, const ContextSet& context, int k) {
  if (context.size() < 1 || k < 1) throw std::invalid_argument("paired_bootstrap needs |c| >= 1 and k >= 1");
  std::vector<ContextSet> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) out.push_back(gather_context(context, rng.resample_indices(context.size(), context.size())));
  return out;
}

std::vector<ResidualSet> compute_residuals(const Model& model, const ContextSet& context,
                                           std::span<const ContextSet> resampled) {
  std::vector<ResidualSet> out;
  out.reserve(resampled.size());
  for (const auto& r : resampled) {
    Graph g(false);
    const ContextStack ctx{g.constant(r.x), g.constant(r.y), 1, r.size()};
    const Var xc = g.constant(context.x);
    const auto head = model.decode(g, model.represent(g, ctx, xc), xc);
    ResidualSet s{g.value(head.mu), g.value(head.sigma), {}};
    s.eps = (context.y - s.mu).cwiseQuotient(s.sigma);
    out.push_back(std::move(s));
  }
  return out;
}

BootstrapContext make_bootstrap_context(const ContextSet& context, const ResidualSet& res, std::vector<int> index) {
  BootstrapContext b{context.x, Matrix(context.y.rows(), 1), std::move(index)};
  for (Eigen::Index i = 0; i < b.y.rows(); ++i)
    b.y(i, 0) = res.mu(i, 0) + res.sigma(i, 0) * res.eps(b.index[static_cast<std::size_t>(i)], 0);
  return b;
}

BootstrapContext make_bootstrap_context(Rng& rng, const ContextSet& context, const ResidualSet& res) {
  return make_bootstrap_context(context, res, rng.resample_indices(context.size(), context.size()));
}

BootstrapHeads bootstrap_heads(Graph& g, const Model& model, const ContextSet& context, const Matrix& x_targets,
                               const BootstrapDraw& draw, const VariantFlags& flags) {
  flags.validate();
  if (has_latent(model.kind())) throw std::invalid_argument("bootstrap pipeline needs a deterministic base model");
  const bool adapt = !flags.naive && !flags.skip_adaptation;
  if (adapt && !is_bootstrap(model.kind()))
    throw std::invalid_argument("only bnp/banp models carry the adaptation layer");
  const int m = context.size();
  const int k = draw.k();
  const int t = static_cast<int>(x_targets.rows());
  if (m < 1 || k < 1 || t < 1) throw std::invalid_argument("bootstrap pipeline needs a context, k >= 1 and targets");
  const bool paired = !(flags.naive || flags.skip_paired);
  if (paired && static_cast<int>(draw.paired.size()) != k)
    throw std::invalid_argument("bootstrap draw is missing paired resamples");

  const Var xc = g.constant(context.x);
  const Var yc = g.constant(context.y);
  const Var xt = g.constant(x_targets);
  const ContextStack full{xc, yc, 1, m};

  BootstrapHeads out;
  out.k = k;
  out.targets = t;
  const Var phi_targets = model.represent(g, full, xt);
  out.base = model.decode(g, phi_targets, xt);

  // Base predictions at the original context points, one block per j.
  const Var x_tiled = g.constant(tile(context.x, k));
  const Var y_tiled = g.constant(tile(context.y, k));
  Var mu_hat;
  Var sigma_hat;
  if (paired) {
    Matrix px(static_cast<Eigen::Index>(k) * m, context.x.cols());
    Matrix py(static_cast<Eigen::Index>(k) * m, context.y.cols());
    for (int j = 0; j < k; ++j) {
      const auto& idx = draw.paired[static_cast<std::size_t>(j)];
      for (int i = 0; i < m; ++i) {
        px.row(j * m + i) = context.x.row(idx[static_cast<std::size_t>(i)]);
        py.row(j * m + i) = context.y.row(idx[static_cast<std::size_t>(i)]);
      }
    }
    const ContextStack resampled{g.constant(std::move(px)), g.constant(std::move(py)), k, m};
    const auto head = model.decode(g, model.represent(g, resampled, xc), x_tiled);
    mu_hat = head.mu;
    sigma_hat = head.sigma;
  } else {
    const auto head = model.decode(g, model.represent(g, full, xc), xc);
    mu_hat = k == 1 ? head.mu : g.tile_rows(head.mu, k);
    sigma_hat = k == 1 ? head.sigma : g.tile_rows(head.sigma, k);
  }

  // Residuals are resampled within their own j.
  const Var eps = g.div(g.sub(y_tiled, mu_hat), sigma_hat);
  std::vector<int> idx(static_cast<std::size_t>(k) * static_cast<std::size_t>(m));
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < m; ++i) idx[static_cast<std::size_t>(j * m + i)] = j * m + draw.residual[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  const Var eps_resampled = g.gather_rows(eps, std::move(idx));
  out.bootstrap_y = g.add(mu_hat, g.mul(sigma_hat, eps_resampled));

  const ContextStack boot{x_tiled, out.bootstrap_y, k, m};
  if (!g.recording() && !is_attentive(model.kind())) {
    const Var boot_blocks = model.represent_blocks(g, boot);
    if (adapt) {
      const Var base = model.represent_blocks(g, full);
      out.components = model.decode_blocks(g, k == 1 ? base : g.tile_rows(base, k), xt, boot_blocks);
    } else {
      out.components = model.decode_blocks(g, boot_blocks, xt);
    }
    return out;
  }
  const Var phi_boot = model.represent(g, boot, xt);
  const Var xt_tiled = k == 1 ? xt : g.constant(tile(x_targets, k));
  if (adapt) {
    const Var phi_rep = k == 1 ? phi_targets : g.tile_rows(phi_targets, k);
    out.components = model.decode(g, phi_rep, xt_tiled, phi_boot);
  } else {
    out.components = model.decode(g, phi_boot, xt_tiled);
  }
  return out;
}

BootstrapResult bnp_forward(const Model& model, const ContextSet& context, const Matrix& x_targets,
                            const BootstrapDraw& draw, const VariantFlags& flags) {
  Graph g(false);
  const auto heads = bootstrap_heads(g, model, context, x_targets, draw, flags);
  return {to_ensemble(g, heads.components, heads.k, heads.targets), to_ensemble(g, heads.base, 1, heads.targets)};
}

BootstrapResult bnp_forward(const Model& model, const ContextSet& context, const Matrix& x_targets, int k,
                            const VariantFlags& flags, Rng& rng) {
  const bool paired = !(flags.naive || flags.skip_paired);
  return bnp_forward(model, context, x_targets, BootstrapDraw::sample(rng, context.size(), k, paired), flags);
}

std::vector<double> ensemble_log_density(const EnsemblePrediction& pred, std::span<const double> y) {
  const int k = pred.components();
  if (k < 1) throw std::invalid_argument("ensemble_log_density: empty ensemble");
  if (static_cast<int>(y.size()) != pred.targets()) throw std::invalid_argument("ensemble_log_density: size mismatch");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  std::vector<double> out(y.size());
  std::vector<double> lp(static_cast<std::size_t>(k));
  for (int i = 0; i < pred.targets(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const double s = pred.sigma(j, i);
      const double z = (y[static_cast<std::size_t>(i)] - pred.mu(j, i)) / s;
      lp[static_cast<std::size_t>(j)] = -half_log_2pi - std::log(s) - 0.5 * z * z;
      mx = std::max(mx, lp[static_cast<std::size_t>(j)]);
    }
    double acc = 0.0;
    for (double v : lp) acc += std::exp(v - mx);
    out[static_cast<std::size_t>(i)] = mx + std::log(acc) - std::log(static_cast<double>(k));
  }
  return out;
}

Var mixture_log_prob(Graph& g, Var y_tiled, const GaussianHead& head, int k) {
  const Var lp = g.normal_log_prob(y_tiled, head.mu, head.sigma);
  if (k == 1) return lp;
  return g.affine(g.logsumexp_rows(g.unstack_blocks(lp, k)), 1.0, -std::log(static_cast<double>(k)));
}

}  // namespace bnp
