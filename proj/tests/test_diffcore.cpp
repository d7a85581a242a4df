#include "oracles.hpp"

#include "bnp/layers.hpp"
#include "bnp/params.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace bnp;

TEST_CASE("square and softplus derivatives") {
  ParamStore store;
  const auto w = store.add("w", 1, 1);
  store.value(w)(0, 0) = 3.0;
  {
    Graph g;
    const Var x = g.param(store, w);
    std::vector<double> grad(store.size());
    g.backward(g.sum(g.mul(x, x)), store, grad);
    CHECK(grad[0] == doctest::Approx(6.0).epsilon(1e-15));
  }
  store.value(w)(0, 0) = 0.0;
  Graph g;
  std::vector<double> grad(store.size());
  g.backward(g.sum(g.softplus(g.param(store, w))), store, grad);
  CHECK(grad[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("unused parameters get zero gradient") {
  ParamStore store;
  const auto a = store.add("a", 2, 2);
  store.add("unused", 3, 1);
  store.fill(a, 0.7);
  Graph g;
  std::vector<double> grad(store.size(), 0.0);
  g.backward(g.mean(g.exp(g.param(store, a))), store, grad);
  for (std::size_t i = 4; i < grad.size(); ++i) CHECK(grad[i] == 0.0);
  CHECK(grad[0] == doctest::Approx(std::exp(0.7) / 4.0));
}

TEST_CASE("non-scalar loss and non-finite forward values are rejected") {
  ParamStore store;
  const auto a = store.add("a", 2, 1);
  std::vector<double> grad(store.size());
  {
    Graph g;
    CHECK_THROWS_AS(g.backward(g.param(store, a), store, grad), std::invalid_argument);
  }
  Graph g;
  const Var l = g.log(g.param(store, a));  // log 0 = -inf
  try {
    g.backward(g.sum(l), store, grad);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("every op passes a finite-difference check") {
  Rng rng(11);
  ParamStore store;
  const auto a = store.add("a", 3, 4);
  const auto b = store.add("b", 4, 3);
  const auto r = store.add("r", 1, 4);
  const auto s = store.add("s", 3, 4);
  for (auto id : {a, b, r, s}) store.init_uniform(id, 1.0, rng);
  // Keep the log/div operands away from zero.
  for (auto& v : store.value(s).reshaped()) v = 0.5 + std::abs(v);

  auto check = [&](const char* name, const std::function<Var(Graph&)>& f) {
    INFO(name);
    const auto res = oracle::finite_difference(store, f);
    CHECK(res.max_rel_error < 1e-6);
  };
  auto P = [&](Graph& g, ParamId id) { return g.param(store, id); };
  check("matmul", [&](Graph& g) { return g.sum(g.matmul(P(g, a), P(g, b))); });
  check("matmul_nt", [&](Graph& g) { return g.sum(g.mul(g.matmul_nt(P(g, a), P(g, s)), g.matmul_nt(P(g, a), P(g, s)))); });
  check("add_row", [&](Graph& g) { return g.sum(g.exp(g.add_row(P(g, a), P(g, r)))); });
  check("sub/mul/div", [&](Graph& g) { return g.sum(g.div(g.mul(g.sub(P(g, a), P(g, s)), P(g, a)), P(g, s))); });
  check("scale/affine", [&](Graph& g) { return g.sum(g.mul(g.affine(P(g, a), 1.5, -0.2), g.scale(P(g, s), 0.3))); });
  check("relu", [&](Graph& g) { return g.sum(g.mul(g.relu(P(g, a)), P(g, s))); });
  check("sigmoid", [&](Graph& g) { return g.sum(g.mul(g.sigmoid(P(g, a)), P(g, s))); });
  check("softplus", [&](Graph& g) { return g.sum(g.mul(g.softplus(P(g, a)), P(g, s))); });
  check("log", [&](Graph& g) { return g.sum(g.mul(g.log(P(g, s)), P(g, a))); });
  check("concat/slice", [&](Graph& g) {
    const Var c = g.concat_cols({P(g, a), P(g, s)});
    const Var d = g.concat_rows(std::vector<Var>{c, c});
    return g.sum(g.mul(g.slice_rows(g.slice_cols(d, 2, 5), 1, 4), g.slice_rows(g.slice_cols(d, 1, 5), 2, 4)));
  });
  check("gather/repeat/tile", [&](Graph& g) {
    const Var x = g.gather_rows(P(g, a), {2, 0, 2, 1});
    return g.sum(g.mul(g.repeat_rows(x, 2), g.tile_rows(g.exp(x), 2)));
  });
  check("block_mean", [&](Graph& g) { return g.sum(g.exp(g.block_mean_rows(g.concat_rows(std::vector<Var>{P(g, a), P(g, s)}), 3))); });
  check("unstack/logsumexp", [&](Graph& g) {
    return g.sum(g.exp(g.logsumexp_rows(g.unstack_blocks(g.slice_cols(g.concat_rows(std::vector<Var>{P(g, a), P(g, s)}), 0, 1), 2))));
  });
  check("softmax", [&](Graph& g) { return g.sum(g.mul(g.softmax_rows(P(g, a)), P(g, s))); });
  check("layer_norm", [&](Graph& g) {
    return g.sum(g.mul(g.layer_norm_rows(P(g, a), P(g, r), g.slice_rows(P(g, s), 0, 1)), P(g, s)));
  });
  check("mean", [&](Graph& g) { return g.mean(g.mul(P(g, a), P(g, a))); });
  check("normal_log_prob", [&](Graph& g) {
    return g.sum(g.normal_log_prob(g.slice_cols(P(g, a), 0, 2), g.slice_rows(g.slice_cols(P(g, b), 0, 2), 0, 3), g.slice_cols(P(g, s), 0, 2)));
  });
}

TEST_CASE("random two-layer MLP with mean-square loss matches finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    ParamStore store;
    const auto mlp = Mlp::create(store, "mlp", 2, 3, 6, 2, rng);
    Matrix x(5, 3), y(5, 2);
    for (auto& v : x.reshaped()) v = rng.normal();
    for (auto& v : y.reshaped()) v = rng.normal();
    const auto res = oracle::finite_difference(store, [&](Graph& g) {
      const Var d = g.sub(mlp.forward(g, store, g.constant(x)), g.constant(y));
      return g.mean(g.mul(d, d));
    });
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("mlp_forward") {
  Rng rng(2);
  SUBCASE("zero weights give zero output") {
    ParamStore store;
    const auto mlp = Mlp::create(store, "m", 3, 2, 4, 3, rng);
    for (auto& v : store.values()) v = 0.0;
    Graph g(false);
    CHECK(g.value(mlp.forward(g, store, g.constant(Matrix::Constant(4, 2, 1.7)))).isZero(0.0));
  }
  SUBCASE("two identity layers: ReLU sits between them") {
    ParamStore store;
    const auto mlp = Mlp::create(store, "m", 2, 2, 2, 2, rng);
    for (const auto& l : mlp.layers) {
      store.value(l.weight) = Matrix::Identity(2, 2);
      store.fill(l.bias, 0.0);
    }
    Graph g(false);
    Matrix x(2, 2);
    x << 1, 2, 1, -1;
    const Matrix out = g.value(mlp.forward(g, store, g.constant(x)));
    CHECK(out(0, 0) == 1.0);
    CHECK(out(0, 1) == 2.0);
    CHECK(out(1, 0) == 1.0);
    CHECK(out(1, 1) == 0.0);
  }
  SUBCASE("batch of 8 equals a scalar loop") {
    ParamStore store;
    const auto mlp = Mlp::create(store, "m", 4, 3, 7, 2, rng);
    for (auto id = 0; id < store.count(); ++id) store.init_uniform(ParamId{id}, 0.8, rng);
    Matrix x(8, 3);
    for (auto& v : x.reshaped()) v = rng.normal();
    Graph g(false);
    const Matrix out = g.value(mlp.forward(g, store, g.constant(x)));
    for (int r = 0; r < 8; ++r) {
      const auto ref = oracle::mlp_loop(store, mlp, {x(r, 0), x(r, 1), x(r, 2)});
      for (int c = 0; c < 2; ++c) CHECK(std::abs(out(r, c) - ref[static_cast<std::size_t>(c)]) < 1e-12);
    }
  }
  SUBCASE("shape mismatch") {
    ParamStore store;
    const auto mlp = Mlp::create(store, "m", 2, 3, 4, 1, rng);
    Graph g(false);
    CHECK_THROWS_AS(mlp.forward(g, store, g.constant(Matrix::Zero(2, 2))), std::invalid_argument);
    CHECK_THROWS_AS(Mlp::create(store, "bad", 1, 3, 4, 1, rng), std::invalid_argument);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradients leave parameters unchanged and count the step") {
    ParamStore store;
    const auto p = store.add("p", 2, 2);
    store.fill(p, 0.3);
    adam_step(store, 0.1);
    CHECK(store.step() == 1);
    for (double v : store.values()) CHECK(v == 0.3);
  }
  SUBCASE("first bias-corrected update has magnitude lr") {
    ParamStore store;
    store.add("p", 1, 1);
    store.grads()[0] = 1.0;
    adam_step(store, 0.1);
    CHECK(store.values()[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(store.grads()[0] == 0.0);
  }
  SUBCASE("five steps on a quadratic match a hand-rolled reference") {
    ParamStore store;
    const auto p = store.add("p", 1, 3);
    store.value(p) << 1.0, -2.0, 0.5;
    double ref[3] = {1.0, -2.0, 0.5}, m[3] = {}, v[3] = {};
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 5; ++t) {
      for (int i = 0; i < 3; ++i) {
        store.grads()[static_cast<std::size_t>(i)] = 2.0 * store.values()[static_cast<std::size_t>(i)];
        const double gr = 2.0 * ref[i];
        m[i] = b1 * m[i] + (1 - b1) * gr;
        v[i] = b2 * v[i] + (1 - b2) * gr * gr;
        const double mh = m[i] / (1 - std::pow(b1, t));
        const double vh = v[i] / (1 - std::pow(b2, t));
        ref[i] -= lr * mh / (std::sqrt(vh) + eps);
      }
      adam_step(store, lr);
    }
    for (int i = 0; i < 3; ++i) CHECK(std::abs(store.values()[static_cast<std::size_t>(i)] - ref[i]) < 1e-12);
  }
  SUBCASE("lr = 0 never moves parameters") {
    ParamStore store;
    store.add("p", 1, 2);
    for (int t = 0; t < 3; ++t) {
      store.grads()[0] = 1.0 + t;
      store.grads()[1] = -3.0;
      adam_step(store, 0.0);
    }
    CHECK(store.values()[0] == 0.0);
    CHECK(store.values()[1] == 0.0);
  }
  SUBCASE("NaN gradient aborts naming the parameter") {
    ParamStore store;
    store.add("enc.w", 1, 1);
    store.grads()[0] = std::numeric_limits<double>::quiet_NaN();
    try {
      adam_step(store, 0.1);
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("enc.w") != std::string::npos);
    }
  }
}

TEST_CASE("cosine schedule") {
  const CosineSchedule s{5e-4, 1000};
  CHECK(cosine_lr(s, 0) == 5e-4);
  CHECK(cosine_lr(s, 1000) == 0.0);
  CHECK(cosine_lr(s, 500) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK(cosine_lr(s, 2000) == 0.0);
  for (int t = 0; t <= 1000; t += 37) {
    CHECK(cosine_lr(s, t) >= 0.0);
    CHECK(cosine_lr(s, t) <= 5e-4);
  }
}

TEST_CASE("multihead attention") {
  Rng rng(9);
  ParamStore store;
  const auto mha = MultiheadAttention::create(store, "mha", 3, 3, 3, 4, 2, rng);
  Matrix q(2, 3), k(5, 3), v(5, 3);
  for (auto* m : {&q, &k, &v})
    for (auto& x : m->reshaped()) x = rng.normal();

  SUBCASE("one key-value pair attends with weight 1") {
    Graph g(false);
    const Matrix h = g.value(mha.attend(g, store, g.constant(q), g.constant(k.topRows(1)), g.constant(v.topRows(1))));
    const Matrix vproj = v.topRows(1) * store.value(mha.value.weight) + store.value(mha.value.bias);
    for (int r = 0; r < 2; ++r) CHECK((h.row(r) - vproj).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("joint permutation of keys and values") {
    Graph g(false);
    const std::vector<int> perm{3, 1, 4, 0, 2};
    Matrix kp(5, 3), vp(5, 3);
    for (int i = 0; i < 5; ++i) {
      kp.row(i) = k.row(perm[static_cast<std::size_t>(i)]);
      vp.row(i) = v.row(perm[static_cast<std::size_t>(i)]);
    }
    const Matrix a = g.value(mha.forward(g, store, g.constant(q), g.constant(k), g.constant(v)));
    const Matrix b = g.value(mha.forward(g, store, g.constant(q), g.constant(kp), g.constant(vp)));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("two heads equal an explicit loop") {
    Graph g(false);
    const Matrix out = g.value(mha.forward(g, store, g.constant(q), g.constant(k), g.constant(v)));
    auto proj = [&](const Matrix& x, const Linear& l) { return Matrix(x * store.value(l.weight) + store.value(l.bias).replicate(x.rows(), 1)); };
    const Matrix qp = proj(q, mha.query), kp = proj(k, mha.key), vp = proj(v, mha.value);
    auto layer_norm = [](Matrix x) {
      for (int r = 0; r < x.rows(); ++r) {
        double mean = 0, var = 0;
        for (int c = 0; c < x.cols(); ++c) mean += x(r, c);
        mean /= x.cols();
        for (int c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= x.cols();
        for (int c = 0; c < x.cols(); ++c) x(r, c) = (x(r, c) - mean) / std::sqrt(var + 1e-5);
      }
      return x;
    };
    Matrix h = Matrix::Zero(2, 4);
    for (int head = 0; head < 2; ++head)
      for (int i = 0; i < 2; ++i) {
        std::vector<double> w(5);
        double mx = -1e300, tot = 0;
        for (int j = 0; j < 5; ++j) {
          double dot = 0;
          for (int c = 0; c < 2; ++c) dot += qp(i, head * 2 + c) * kp(j, head * 2 + c);
          w[static_cast<std::size_t>(j)] = dot / std::sqrt(4.0);
          mx = std::max(mx, w[static_cast<std::size_t>(j)]);
        }
        for (auto& x : w) tot += (x = std::exp(x - mx));
        for (int j = 0; j < 5; ++j)
          for (int c = 0; c < 2; ++c) h(i, head * 2 + c) += w[static_cast<std::size_t>(j)] / tot * vp(j, head * 2 + c);
      }
    const Matrix h1 = layer_norm(qp + h);
    const Matrix ref = layer_norm(h1 + proj(h1, mha.feed).cwiseMax(0.0));
    CHECK((out - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("empty keys are rejected") {
    Graph g(false);
    CHECK_THROWS(mha.forward(g, store, g.constant(q), g.constant(Matrix(0, 3)), g.constant(Matrix(0, 3))));
  }
}
