#include "bnp/predict.hpp"

#include "bnp/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace bnp {

EnsemblePrediction predict(const Model& model, const ContextSet& context, const Matrix& x_targets, int k,
                           const VariantFlags& flags, Rng& rng) {
  if (k < 1) throw std::invalid_argument("predict: k must be >= 1");
  if (context.size() < 1) throw std::invalid_argument("predict: empty context");
  const int t = static_cast<int>(x_targets.rows());
  const ModelKind kind = model.kind();
  if (is_bootstrap(kind) || flags.naive) return bnp_forward(model, context, x_targets, k, flags, rng).ensemble;
  if (flags.any()) throw std::invalid_argument("ablation variants need a bootstrap model");

  Graph g(false);
  const ContextStack ctx{g.constant(context.x), g.constant(context.y), 1, context.size()};
  const Var xt = g.constant(x_targets);
  EnsemblePrediction out;
  const bool blocks = !is_attentive(kind);
  const Var phi = blocks ? model.represent_blocks(g, ctx) : model.represent(g, ctx, xt);
  if (!has_latent(kind)) {
    const auto head = blocks ? model.decode_blocks(g, phi, xt) : model.decode(g, phi, xt);
    out.mu = Eigen::Map<const Matrix>(g.value(head.mu).data(), 1, t);
    out.sigma = Eigen::Map<const Matrix>(g.value(head.sigma).data(), 1, t);
    return out;
  }
  const auto q = model.latent(g, ctx);
  const int dz = model.arch().latent;
  Matrix eps(k, dz);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
  const Var z = g.add(g.tile_rows(q.mean, k), g.mul(g.tile_rows(q.std, k), g.constant(std::move(eps))));
  const auto head = blocks ? model.decode_blocks(g, g.concat_cols({g.tile_rows(phi, k), z}), xt)
                           : model.decode(g, g.concat_cols({g.tile_rows(phi, k), g.repeat_rows(z, t)}), g.tile_rows(xt, k));
  out.mu = Eigen::Map<const Matrix>(g.value(head.mu).data(), k, t);
  out.sigma = Eigen::Map<const Matrix>(g.value(head.sigma).data(), k, t);
  return out;
}

MixtureMoments mixture_moments(const EnsemblePrediction& pred) {
  const int k = pred.components();
  MixtureMoments m{std::vector<double>(static_cast<std::size_t>(pred.targets())),
                   std::vector<double>(static_cast<std::size_t>(pred.targets()))};
  for (int i = 0; i < pred.targets(); ++i) {
    double mean = 0.0;
    for (int j = 0; j < k; ++j) mean += pred.mu(j, i);
    mean /= k;
    double var = 0.0;
    for (int j = 0; j < k; ++j) {
      const double d = pred.mu(j, i) - mean;
      var += pred.sigma(j, i) * pred.sigma(j, i) + d * d;
    }
    m.mean[static_cast<std::size_t>(i)] = mean;
    m.stddev[static_cast<std::size_t>(i)] = std::sqrt(var / k);
  }
  return m;
}

}  // namespace bnp
