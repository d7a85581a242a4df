#include "bnp/models.hpp"

#include "bnp/rng.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bnp {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Cnp: return "cnp";
    case ModelKind::Np: return "np";
    case ModelKind::Canp: return "canp";
    case ModelKind::Anp: return "anp";
    case ModelKind::Bnp: return "bnp";
    case ModelKind::Banp: return "banp";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::Cnp, ModelKind::Np, ModelKind::Canp, ModelKind::Anp, ModelKind::Bnp, ModelKind::Banp})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown model '" + std::string(s) + "' (expected cnp|np|canp|anp|bnp|banp)");
}

bool is_attentive(ModelKind k) { return k == ModelKind::Canp || k == ModelKind::Anp || k == ModelKind::Banp; }
bool has_latent(ModelKind k) { return k == ModelKind::Np || k == ModelKind::Anp; }
bool is_bootstrap(ModelKind k) { return k == ModelKind::Bnp || k == ModelKind::Banp; }

ArchConfig ArchConfig::defaults(ModelKind kind, int hidden) {
  ArchConfig a;
  a.hidden = hidden;
  a.latent = hidden;
  if (is_attentive(kind)) a.pre_layers = 2;
  return a;
}

void ArchConfig::validate(ModelKind kind) const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid architecture: ") + what);
  };
  need(pre_layers >= 2 && post_layers >= 2 && dec_layers >= 2, "layer counts must be >= 2");
  need(hidden > 0 && dim_x > 0 && dim_y > 0, "widths must be positive");
  if (has_latent(kind)) need(latent > 0, "latent width must be positive");
  if (is_attentive(kind)) {
    need(value_layers >= 2 && qk_layers >= 2, "attention MLP depths must be >= 2");
    need(heads > 0 && hidden % heads == 0, "hidden width must be divisible by the head count");
  }
}

Var squash_sigma(Graph& g, Var raw) { return g.affine(g.softplus(raw), 0.9, 0.1); }
Var squash_rho(Graph& g, Var raw) { return g.affine(g.sigmoid(raw), 0.9, 0.1); }

namespace {

/// Applies self-attention separately inside each block of `size` rows.
Var blockwise_self_attention(Graph& g, const ParamStore& store, const MultiheadAttention& sa, Var h, int blocks,
                             int size) {
  if (blocks == 1) return sa.forward(g, store, h, h, h);
  std::vector<Var> parts;
  parts.reserve(static_cast<std::size_t>(blocks));
  for (int j = 0; j < blocks; ++j) {
    const Var hj = g.slice_rows(h, j * size, size);
    parts.push_back(sa.forward(g, store, hj, hj, hj));
  }
  return g.concat_rows(parts);
}

Var repeat_if_needed(Graph& g, Var a, int times) { return times == 1 ? a : g.repeat_rows(a, times); }

}  // namespace

Var PooledEncoder::forward(Graph& g, const ParamStore& store, const ContextStack& ctx) const {
  Var h = pre.forward(g, store, g.concat_cols({ctx.x, ctx.y}));
  if (self_attention) h = blockwise_self_attention(g, store, *self_attention, g.relu(h), ctx.blocks, ctx.size);
  const Var pooled = ctx.size == 1 ? h : g.block_mean_rows(h, ctx.size);
  return post.forward(g, store, pooled);
}

Var CrossAttentionEncoder::forward(Graph& g, const ParamStore& store, const ContextStack& ctx, Var queries) const {
  const Var q = qk.forward(g, store, queries);
  const Var keys = qk.forward(g, store, ctx.x);
  const Var vals = blockwise_self_attention(g, store, self_attention,
                                            value.forward(g, store, g.concat_cols({ctx.x, ctx.y})), ctx.blocks,
                                            ctx.size);
  if (ctx.blocks == 1) return cross_attention.forward(g, store, q, keys, vals);
  std::vector<Var> parts;
  parts.reserve(static_cast<std::size_t>(ctx.blocks));
  for (int j = 0; j < ctx.blocks; ++j) {
    parts.push_back(cross_attention.forward(g, store, q, g.slice_rows(keys, j * ctx.size, ctx.size),
                                            g.slice_rows(vals, j * ctx.size, ctx.size)));
  }
  return g.concat_rows(parts);
}

Model::Model(ModelKind kind, const ArchConfig& arch, std::uint64_t init_seed) : kind_(kind), arch_(arch) {
  arch_.validate(kind);
  Rng rng(init_seed, "init");
  const int dh = arch_.hidden;
  const int dxy = arch_.dim_x + arch_.dim_y;
  auto pooled = [&](const std::string& name, int out, bool attend) {
    PooledEncoder e;
    e.pre = Mlp::create(params_, name + ".pre", arch_.pre_layers, dxy, dh, dh, rng);
    if (attend) e.self_attention = MultiheadAttention::create(params_, name + ".sa", dh, dh, dh, dh, arch_.heads, rng);
    e.post = Mlp::create(params_, name + ".post", arch_.post_layers, dh, dh, out, rng);
    return e;
  };
  auto cross = [&](const std::string& name) {
    CrossAttentionEncoder e{
        Mlp::create(params_, name + ".qk", arch_.qk_layers, arch_.dim_x, dh, dh, rng),
        Mlp::create(params_, name + ".value", arch_.value_layers, dxy, dh, dh, rng),
        MultiheadAttention::create(params_, name + ".sa", dh, dh, dh, dh, arch_.heads, rng),
        MultiheadAttention::create(params_, name + ".cross", dh, dh, dh, dh, arch_.heads, rng),
    };
    return e;
  };

  switch (kind_) {
    case ModelKind::Cnp:
    case ModelKind::Bnp:
      pooled_.push_back(pooled("enc1", dh, false));
      pooled_.push_back(pooled("enc2", dh, false));
      break;
    case ModelKind::Np:
      pooled_.push_back(pooled("denc", dh, false));
      latent_ = pooled("lenc", 2 * arch_.latent, false);
      break;
    case ModelKind::Canp:
    case ModelKind::Banp:
      cross_ = cross("enc1");
      pooled_.push_back(pooled("enc2", dh, true));
      break;
    case ModelKind::Anp:
      cross_ = cross("denc");
      latent_ = pooled("lenc", 2 * arch_.latent, true);
      break;
  }
  const int dec_in = rep_dim() + (has_latent(kind_) ? arch_.latent : 0) + arch_.dim_x;
  decoder_ = Mlp::create(params_, "dec", arch_.dec_layers, dec_in, dh, 2 * arch_.dim_y, rng);
  if (is_bootstrap(kind_)) adaptation_ = Linear::create(params_, "dec.adapt", 2 * dh, dh, rng, /*zero_init=*/true);
}

int Model::rep_dim() const { return has_latent(kind_) ? arch_.hidden : 2 * arch_.hidden; }

ContextStack Model::canonical(Graph& g, const ContextStack& ctx) const {
  if (ctx.size <= 0 || ctx.blocks <= 0 || g.rows(ctx.x) != ctx.blocks * ctx.size || g.rows(ctx.y) != g.rows(ctx.x))
    throw std::invalid_argument("context must be non-empty and match its block layout");
  if (g.cols(ctx.x) != arch_.dim_x || g.cols(ctx.y) != arch_.dim_y)
    throw std::invalid_argument("context feature dimensions do not match the architecture");
  if (ctx.size == 1) return ctx;
  const Matrix& xv = g.value(ctx.x);
  const Matrix& yv = g.value(ctx.y);
  auto less = [&](int a, int b) {
    for (Eigen::Index c = 0; c < xv.cols(); ++c)
      if (xv(a, c) != xv(b, c)) return xv(a, c) < xv(b, c);
    for (Eigen::Index c = 0; c < yv.cols(); ++c)
      if (yv(a, c) != yv(b, c)) return yv(a, c) < yv(b, c);
    return false;
  };
  std::vector<int> order(static_cast<std::size_t>(ctx.blocks * ctx.size));
  std::iota(order.begin(), order.end(), 0);
  for (int j = 0; j < ctx.blocks; ++j) {
    auto first = order.begin() + j * ctx.size;
    std::stable_sort(first, first + ctx.size, less);
  }
  if (std::is_sorted(order.begin(), order.end())) return ctx;
  ContextStack out = ctx;
  out.x = g.gather_rows(ctx.x, order);
  out.y = g.gather_rows(ctx.y, std::move(order));
  return out;
}

Var Model::represent(Graph& g, const ContextStack& raw, Var queries) const {
  const ContextStack ctx = canonical(g, raw);
  const int t = g.rows(queries);
  if (t <= 0) throw std::invalid_argument("represent: at least one query point is required");
  switch (kind_) {
    case ModelKind::Cnp:
    case ModelKind::Bnp: {
      const Var phi = g.concat_cols({pooled_[0].forward(g, params_, ctx), pooled_[1].forward(g, params_, ctx)});
      return repeat_if_needed(g, phi, t);
    }
    case ModelKind::Np: return repeat_if_needed(g, pooled_[0].forward(g, params_, ctx), t);
    case ModelKind::Canp:
    case ModelKind::Banp: {
      const Var attn = cross_->forward(g, params_, ctx, queries);
      const Var pooled = repeat_if_needed(g, pooled_[0].forward(g, params_, ctx), t);
      return g.concat_cols({attn, pooled});
    }
    case ModelKind::Anp: return cross_->forward(g, params_, ctx, queries);
  }
  throw std::logic_error("unreachable");
}

LatentHead Model::latent(Graph& g, const ContextStack& raw) const {
  if (!latent_) throw std::logic_error(std::string(to_string(kind_)) + " has no latent path");
  const ContextStack ctx = canonical(g, raw);
  const Var out = latent_->forward(g, params_, ctx);
  const int dz = arch_.latent;
  return {g.slice_cols(out, 0, dz), squash_rho(g, g.slice_cols(out, dz, dz))};
}

GaussianHead Model::decode(Graph& g, Var rep, Var x, std::optional<Var> bootstrap_rep) const {
  if (g.rows(rep) != g.rows(x)) throw std::invalid_argument("decode: representation and target rows differ");
  const Var in = g.concat_cols({rep, x});
  Var out;
  if (bootstrap_rep) {
    if (!adaptation_) throw std::logic_error("decode: model has no adaptation layer");
    if (g.rows(*bootstrap_rep) != g.rows(x)) throw std::invalid_argument("decode: bootstrap rows differ");
    const Var h1 = decoder_.layers.front().forward(g, params_, in);
    const Var h2 = adaptation_->forward(g, params_, *bootstrap_rep);
    out = decoder_.forward_from(g, params_, g.relu(g.add(h1, h2)), 1);
  } else {
    out = decoder_.forward(g, params_, in);
  }
  const int dy = arch_.dim_y;
  return {g.slice_cols(out, 0, dy), squash_sigma(g, g.slice_cols(out, dy, dy))};
}

Var Model::represent_blocks(Graph& g, const ContextStack& raw) const {
  const ContextStack ctx = canonical(g, raw);
  switch (kind_) {
    case ModelKind::Cnp:
    case ModelKind::Bnp:
      return g.concat_cols({pooled_[0].forward(g, params_, ctx), pooled_[1].forward(g, params_, ctx)});
    case ModelKind::Np: return pooled_[0].forward(g, params_, ctx);
    default: throw std::invalid_argument("represent_blocks: " + std::string(to_string(kind_)) + " is target dependent");
  }
}

GaussianHead Model::decode_blocks(Graph& g, Var rep, Var x, std::optional<Var> bootstrap_rep) const {
  const Linear& first = decoder_.layers.front();
  const int d = g.cols(rep);
  if (d + g.cols(x) != first.in) throw std::invalid_argument("decode_blocks: input width does not match the decoder");
  const int blocks = g.rows(rep);
  const int t = g.rows(x);
  const Var w = g.param(params_, first.weight);
  Var a = g.matmul(rep, g.slice_rows(w, 0, d));
  if (bootstrap_rep) {
    if (!adaptation_) throw std::logic_error("decode_blocks: model has no adaptation layer");
    if (g.rows(*bootstrap_rep) != blocks) throw std::invalid_argument("decode_blocks: bootstrap rows differ");
    a = g.add(a, adaptation_->forward(g, params_, *bootstrap_rep));
  }
  const Var b = g.add_row(g.matmul(x, g.slice_rows(w, d, first.in - d)), g.param(params_, first.bias));
  const Var h1 = blocks == 1 ? g.add_row(b, a) : g.add(g.repeat_rows(a, t), g.tile_rows(b, blocks));
  const Var out = decoder_.forward_from(g, params_, g.relu(h1), 1);
  const int dy = arch_.dim_y;
  return {g.slice_cols(out, 0, dy), squash_sigma(g, g.slice_cols(out, dy, dy))};
}

Matrix encode_context(const Model& model, const Matrix& xc, const Matrix& yc, const Matrix& queries) {
  Graph g(false);
  const ContextStack ctx{g.constant(xc), g.constant(yc), 1, static_cast<int>(xc.rows())};
  return g.value(model.represent(g, ctx, g.constant(queries)));
}

LatentValues encode_latent(const Model& model, const Matrix& xc, const Matrix& yc) {
  Graph g(false);
  const ContextStack ctx{g.constant(xc), g.constant(yc), 1, static_cast<int>(xc.rows())};
  const auto head = model.latent(g, ctx);
  return {g.value(head.mean), g.value(head.std)};
}

}  // namespace bnp
