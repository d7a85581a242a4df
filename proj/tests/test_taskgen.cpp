#include "oracles.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace bnp;

TEST_CASE("kernel_eval") {
  const KernelSpec rbf{KernelFamily::Rbf, 0.7, 0.3, 1.0};
  CHECK(kernel_eval(rbf, 0.4, 0.4) == doctest::Approx(0.49).epsilon(1e-15));
  CHECK(kernel_eval({KernelFamily::Rbf, 1.0, 1.0, 1.0}, 0.0, 1.0) == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK(kernel_eval({KernelFamily::Matern52, 0.5, 0.2, 1.0}, 1.0, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(kernel_eval({KernelFamily::Periodic, 0.8, 0.4, 0.3}, -1.0, -1.0) == doctest::Approx(0.64).epsilon(1e-15));
  Rng rng(1);
  for (auto fam : {KernelFamily::Rbf, KernelFamily::Matern52, KernelFamily::Periodic}) {
    const KernelSpec s{fam, 0.9, 0.25, 0.4};
    for (int i = 0; i < 50; ++i) {
      const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
      CHECK(kernel_eval(s, a, b) == kernel_eval(s, b, a));
    }
  }
}

TEST_CASE("kernel matrices from random specs factorise after jitter") {
  Rng rng(2);
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    KernelPrior prior;
    prior.family = static_cast<KernelFamily>(i % 3);
    const auto spec = prior.sample(rng);
    std::vector<double> x(30);
    for (auto& v : x) v = rng.uniform(-2, 2);
    try {
      jittered_cholesky(kernel_matrix(spec, x, x), spec.scale * spec.scale);
    } catch (const std::runtime_error&) {
      ++failures;
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("perfectly correlated points still sample") {
  Rng rng(3);
  const KernelSpec spec{KernelFamily::Rbf, 1.0, 0.5, 1.0};
  const std::vector<double> x{0.3, 0.3};
  for (int i = 0; i < 100; ++i) {
    const auto y = sample_gp(rng, spec, x, 0.0);
    CHECK(std::abs(y[0] - y[1]) < 10.0 * std::sqrt(1e-2));
  }
}

TEST_CASE("empirical covariance of y(0) and y(0.3) matches the kernel") {
  Rng rng(4);
  const KernelSpec spec{KernelFamily::Rbf, 1.0, 0.5, 1.0};
  const std::vector<double> x{0.0, 0.3};
  double s01 = 0.0, s00 = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto y = sample_gp(rng, spec, x, 0.0);
    s01 += y[0] * y[1];
    s00 += y[0] * y[0];
  }
  CHECK(std::abs(s01 / n - kernel_eval(spec, 0.0, 0.3)) < 0.05);
  CHECK(std::abs(s00 / n - 1.0) < 0.05);
}

TEST_CASE("sample_task structure and determinism") {
  const auto dist = TaskDistribution::for_dataset(Dataset::Rbf);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng a(seed), b(seed);
    const Task t = sample_task(a, dist);
    const Task u = sample_task(b, dist);
    CHECK(t.x == u.x);
    CHECK(t.y == u.y);
    CHECK(t.context == u.context);
    const int n = t.size();
    const int c = static_cast<int>(t.context.size());
    CHECK(c >= 3);
    CHECK(c <= 47);
    CHECK(n - c >= 3);
    CHECK(n <= 50);
    std::set<int> all(t.context.begin(), t.context.end());
    all.insert(t.target.begin(), t.target.end());
    CHECK(static_cast<int>(all.size()) == n);
    for (double x : t.x) CHECK((x >= -2.0 && x <= 2.0));
  }
}

TEST_CASE("marginal variance of y equals E[s^2] + noise") {
  const auto dist = TaskDistribution::for_dataset(Dataset::Rbf);
  double acc = 0.0;
  long count = 0;
  for (std::uint64_t s = 0; s < 4000; ++s) {
    Rng rng(s, "marginal");
    const Task t = sample_task(rng, dist);
    acc += t.y[0] * t.y[0];
    ++count;
  }
  // E[s^2] for s ~ U(0.1, 1) is (1 - 0.001) / (3 * 0.9).
  const double expected = 0.999 / 2.7 + 1e-2;
  CHECK(std::abs(acc / count - expected) < 0.03);
}

TEST_CASE("t-noise") {
  Rng rng(5);
  Task t = oracle::random_task(rng, 5, 20);
  const Task before = t;
  apply_t_noise(t, rng, 0.0, 0.0);
  CHECK(t.y == before.y);

  // Truncated second moment at dof 2.1 against the exact density; full variance at dof 5.
  Task big;
  big.x.assign(1000000, 0.0);
  big.y.assign(1000000, 0.0);
  Task wide = big;
  Rng r2(6);
  apply_t_noise(big, r2, 0.1, 0.1);
  const double cap = 1.0;
  double truncated = 0.0;
  for (double y : big.y) truncated += std::min(y * y, cap * cap);
  truncated /= static_cast<double>(big.y.size());
  const boost::math::students_t t21(2.1);
  const double bound = cap / 0.1;
  const double inner = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double u) { return u * u * boost::math::pdf(t21, u); }, -bound, bound);
  const double exact = 0.01 * inner + cap * cap * 2.0 * boost::math::cdf(boost::math::complement(t21, bound));
  CHECK(std::abs(truncated - exact) < 0.05 * exact);

  Rng r3(8);
  apply_t_noise(wide, r3, 0.1, 0.1, 5.0);
  double var = 0.0;
  for (double y : wide.y) var += y * y;
  var /= static_cast<double>(wide.y.size());
  const double expected = 0.01 * 5.0 / 3.0;
  CHECK(std::abs(var - expected) < 0.05 * expected);

  Rng c1(7), c2(7);
  Task a = before, b = before;
  apply_t_noise(a, c1, 0.0, 0.15);
  apply_t_noise(b, c2, 0.0, 0.15);
  CHECK(a.y == b.y);
  CHECK(a.x == before.x);
  CHECK(a.context == before.context);
}

TEST_CASE("batches are independent of generation order and dump deterministically") {
  const auto dist = TaskDistribution::for_dataset(Dataset::Matern);
  const auto a = sample_batch(9, "train", 3, 8, dist);
  const auto b = sample_batch(9, "train", 3, 8, dist);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].y == b[i].y);
  Rng rng(derive_seed(9, "train", 3), "task", 5);
  CHECK(sample_task(rng, dist).y == a[5].y);
  std::ostringstream s1, s2;
  write_tasks_csv(s1, a);
  write_tasks_csv(s2, b);
  CHECK(s1.str() == s2.str());
  CHECK(s1.str().rfind("task_id,point_id,is_context,x,y\n", 0) == 0);
}

TEST_CASE("dataset names") {
  CHECK(parse_dataset("rbf-tnoise") == Dataset::TNoise);
  CHECK(to_string(parse_dataset("periodic")) == "periodic");
  CHECK_THROWS_AS(parse_dataset("cosine"), std::invalid_argument);
}
