#pragma once

#include "bnp/bootstrap.hpp"

namespace bnp {

class Rng;

/// Predictive ensemble at `x_targets` given one context.
///
/// CNP/CANP give one component (or, with `flags.naive`, k residual-bootstrap
/// components through the plain decoder). NP/ANP give one component per
/// latent draw z ~ q(z | context). BNP/BANP run the bootstrap pipeline.
EnsemblePrediction predict(const Model& model, const ContextSet& context, const Matrix& x_targets, int k,
                           const VariantFlags& flags, Rng& rng);

/// Moment-matched mixture: mean and standard deviation per target.
struct MixtureMoments {
  std::vector<double> mean;
  std::vector<double> stddev;
};
MixtureMoments mixture_moments(const EnsemblePrediction& pred);

}  // namespace bnp
