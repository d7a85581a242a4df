#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace bnp;

namespace {

Matrix random_column(Rng& rng, int n, double lo = -2.0, double hi = 2.0) {
  Matrix m(n, 1);
  for (int i = 0; i < n; ++i) m(i, 0) = rng.uniform(lo, hi);
  return m;
}

Matrix permute_rows(const Matrix& m, const std::vector<int>& p) {
  Matrix r(m.rows(), m.cols());
  for (std::size_t i = 0; i < p.size(); ++i) r.row(static_cast<Eigen::Index>(i)) = m.row(p[i]);
  return r;
}

const ModelKind kAll[] = {ModelKind::Cnp, ModelKind::Np, ModelKind::Canp, ModelKind::Anp, ModelKind::Bnp, ModelKind::Banp};

}  // namespace

TEST_CASE("model names") {
  for (auto k : kAll) CHECK(parse_model_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_model_kind("gp"), std::invalid_argument);
}

TEST_CASE("permuting the context gives a bitwise-identical representation") {
  Rng rng(11);
  for (auto kind : kAll) {
    const Model model(kind, oracle::tiny_arch(kind), 3);
    const Matrix xc = random_column(rng, 9), yc = random_column(rng, 9);
    const Matrix xt = random_column(rng, 4);
    std::vector<int> p(9);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng.engine());
    const Matrix a = encode_context(model, xc, yc, xt);
    const Matrix b = encode_context(model, permute_rows(xc, p), permute_rows(yc, p), xt);
    CHECK(a == b);
    if (has_latent(kind)) {
      const auto la = encode_latent(model, xc, yc);
      const auto lb = encode_latent(model, permute_rows(xc, p), permute_rows(yc, p));
      CHECK(la.mean == lb.mean);
      CHECK(la.std == lb.std);
    }
  }
}

TEST_CASE("single context pair: phi is the post-MLP of the pair's embedding") {
  const Model model(ModelKind::Cnp, oracle::tiny_arch(ModelKind::Cnp), 4);
  const auto& store = model.params();
  const Matrix xc = Matrix::Constant(1, 1, 0.3), yc = Matrix::Constant(1, 1, -0.7);
  const Matrix phi = encode_context(model, xc, yc, Matrix::Constant(2, 1, 0.0));
  std::vector<double> expected;
  for (const char* enc : {"enc1", "enc2"}) {
    const auto h = oracle::mlp_loop(store, oracle::mlp_by_name(store, std::string(enc) + ".pre"), {0.3, -0.7});
    const auto out = oracle::mlp_loop(store, oracle::mlp_by_name(store, std::string(enc) + ".post"), h);
    expected.insert(expected.end(), out.begin(), out.end());
  }
  REQUIRE(phi.cols() == static_cast<Eigen::Index>(expected.size()));
  for (Eigen::Index r = 0; r < phi.rows(); ++r)
    for (Eigen::Index c = 0; c < phi.cols(); ++c) CHECK(std::abs(phi(r, c) - expected[static_cast<std::size_t>(c)]) < 1e-12);
}

TEST_CASE("duplicating every context pair leaves phi unchanged") {
  Rng rng(12);
  for (auto kind : kAll) {
    const Model model(kind, oracle::tiny_arch(kind), 5);
    const Matrix xc = random_column(rng, 6), yc = random_column(rng, 6);
    Matrix x2(12, 1), y2(12, 1);
    x2 << xc, xc;
    y2 << yc, yc;
    const Matrix xt = random_column(rng, 3);
    const Matrix a = encode_context(model, xc, yc, xt);
    const Matrix b = encode_context(model, x2, y2, xt);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attentive encoder: single pair and repeated copies of it agree") {
  Rng rng(13);
  for (auto kind : {ModelKind::Canp, ModelKind::Anp, ModelKind::Banp}) {
    const Model model(kind, oracle::tiny_arch(kind), 6);
    const Matrix xt = random_column(rng, 5);
    const Matrix one_x = Matrix::Constant(1, 1, 0.4), one_y = Matrix::Constant(1, 1, 1.1);
    const Matrix a = encode_context(model, one_x, one_y, xt);
    const Matrix b = encode_context(model, Matrix::Constant(3, 1, 0.4), Matrix::Constant(3, 1, 1.1), xt);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("stacked context blocks equal separate encodings") {
  Rng rng(14);
  for (auto kind : kAll) {
    const Model model(kind, oracle::tiny_arch(kind), 7);
    const int blocks = 3, size = 5;
    const Matrix xs = random_column(rng, blocks * size), ys = random_column(rng, blocks * size);
    const Matrix xt = random_column(rng, 4);
    Graph g(false);
    const Matrix stacked = g.value(model.represent(g, {g.constant(xs), g.constant(ys), blocks, size}, g.constant(xt)));
    for (int j = 0; j < blocks; ++j) {
      const Matrix one = encode_context(model, xs.middleRows(j * size, size), ys.middleRows(j * size, size), xt);
      CHECK((stacked.middleRows(j * 4, 4) - one).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("squashing and floors") {
  Graph g(false);
  CHECK(g.scalar_value(squash_sigma(g, g.scalar(0.0))) == doctest::Approx(0.1 + 0.9 * std::log(2.0)).epsilon(1e-15));
  CHECK(g.scalar_value(squash_sigma(g, g.scalar(0.0))) == doctest::Approx(0.72384).epsilon(1e-5));
  CHECK(g.scalar_value(squash_rho(g, g.scalar(0.0))) == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(g.scalar_value(squash_sigma(g, g.scalar(-800.0))) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(g.scalar_value(squash_rho(g, g.scalar(-800.0))) == doctest::Approx(0.1).epsilon(1e-15));
  for (double raw : {-50.0, -3.0, 0.5, 40.0}) {
    CHECK(g.scalar_value(squash_sigma(g, g.scalar(raw))) >= 0.1);
    const double rho = g.scalar_value(squash_rho(g, g.scalar(raw)));
    CHECK(rho >= 0.1);
    CHECK(rho <= 1.0);
  }
}

TEST_CASE("decode matches a per-target scalar loop") {
  Rng rng(15);
  for (auto kind : {ModelKind::Cnp, ModelKind::Np, ModelKind::Canp}) {
    const Model model(kind, oracle::tiny_arch(kind), 8);
    const auto& store = model.params();
    const int in = model.rep_dim() + (has_latent(kind) ? model.arch().latent : 0);
    const int t = 7;
    Matrix rep(t, in);
    for (Eigen::Index i = 0; i < rep.size(); ++i) rep.data()[i] = rng.normal();
    const Matrix xt = random_column(rng, t);
    Graph g(false);
    const auto head = model.decode(g, g.constant(rep), g.constant(xt));
    const auto dec = oracle::mlp_by_name(store, "dec");
    for (int i = 0; i < t; ++i) {
      std::vector<double> row(rep.row(i).data(), rep.row(i).data() + in);
      row.push_back(xt(i, 0));
      const auto out = oracle::mlp_loop(store, dec, row);
      CHECK(std::abs(g.value(head.mu)(i, 0) - out[0]) < 1e-12);
      CHECK(std::abs(g.value(head.sigma)(i, 0) - (0.1 + 0.9 * oracle::softplus(out[1]))) < 1e-12);
    }
  }
}

TEST_CASE("block decode equals decode on the expanded rows") {
  Rng rng(17);
  for (auto kind : {ModelKind::Cnp, ModelKind::Np, ModelKind::Bnp}) {
    Model model(kind, oracle::tiny_arch(kind), 10);
    oracle::randomize(model.params(), rng);
    const int in = model.rep_dim() + (has_latent(kind) ? model.arch().latent : 0);
    for (int blocks : {1, 3}) {
      const int t = 5;
      Matrix rep(blocks, in), boot(blocks, model.rep_dim());
      for (Eigen::Index i = 0; i < rep.size(); ++i) rep.data()[i] = rng.normal();
      for (Eigen::Index i = 0; i < boot.size(); ++i) boot.data()[i] = rng.normal();
      const Matrix xt = random_column(rng, t);
      Graph g(false);
      const Var r = g.constant(rep), b = g.constant(boot), x = g.constant(xt);
      std::optional<Var> ba, be;
      if (is_bootstrap(kind)) {
        ba = b;
        be = g.repeat_rows(b, t);
      }
      const auto fast = model.decode_blocks(g, r, x, ba);
      const auto slow = model.decode(g, g.repeat_rows(r, t), g.tile_rows(x, blocks), be);
      CHECK((g.value(fast.mu) - g.value(slow.mu)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((g.value(fast.sigma) - g.value(slow.sigma)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  const Model canp(ModelKind::Canp, oracle::tiny_arch(ModelKind::Canp), 1);
  Graph g(false);
  const ContextStack ctx{g.constant(Matrix::Zero(2, 1)), g.constant(Matrix::Zero(2, 1)), 1, 2};
  CHECK_THROWS_AS(canp.represent_blocks(g, ctx), std::invalid_argument);
}

TEST_CASE("adaptation layer starts at zero") {
  Rng rng(16);
  const Model model(ModelKind::Bnp, oracle::tiny_arch(ModelKind::Bnp), 9);
  const Matrix xt = random_column(rng, 4);
  Matrix rep(4, model.rep_dim()), boot(4, model.rep_dim());
  for (Eigen::Index i = 0; i < rep.size(); ++i) {
    rep.data()[i] = rng.normal();
    boot.data()[i] = rng.normal();
  }
  Graph g(false);
  const auto plain = model.decode(g, g.constant(rep), g.constant(xt));
  const auto adapted = model.decode(g, g.constant(rep), g.constant(xt), g.constant(boot));
  CHECK(g.value(plain.mu) == g.value(adapted.mu));
  CHECK(g.value(plain.sigma) == g.value(adapted.sigma));
}

TEST_CASE("model preconditions") {
  const Model model(ModelKind::Cnp, oracle::tiny_arch(ModelKind::Cnp), 1);
  CHECK_THROWS_AS(encode_context(model, Matrix(0, 1), Matrix(0, 1), Matrix::Zero(2, 1)), std::invalid_argument);
  CHECK_THROWS_AS(encode_context(model, Matrix::Zero(2, 2), Matrix::Zero(2, 1), Matrix::Zero(2, 1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(encode_latent(model, Matrix::Zero(2, 1), Matrix::Zero(2, 1)), std::logic_error);
  auto bad = ArchConfig::defaults(ModelKind::Canp, 10);
  bad.heads = 3;
  CHECK_THROWS_AS(Model(ModelKind::Canp, bad, 0), std::invalid_argument);
}
