// Tensor core: shapes, elementwise ops, and the three dense matrix
// products checked against independent triple-loop oracles.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "protodiv/rng.hpp"
#include "protodiv/tensor.hpp"

using namespace protodiv;

namespace {

Tensor random_matrix(std::size_t n, std::size_t m, Rng& rng) {
  Tensor t({n, m});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Oracle: plain triple loop, no BLAS anywhere near it.
Tensor loop_matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const std::size_t n = ta ? a.cols() : a.rows();
  const std::size_t m = ta ? a.rows() : a.cols();
  const std::size_t k = tb ? b.rows() : b.cols();
  Tensor c({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < m; ++l) {
        const double av = ta ? a(l, i) : a(i, l);
        const double bv = tb ? b(j, l) : b(l, j);
        acc += av * bv;
      }
      c(i, j) = acc;
    }
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("construction and shape accounting") {
  Tensor t({3, 4});
  CHECK(t.rank() == 2);
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 4);
  CHECK(t.size() == 12);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

  Tensor s = Tensor::scalar(2.5);
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s.value() == 2.5);

  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(t.value(), DimensionError);
  CHECK_THROWS_AS(Tensor({3}).rows(), DimensionError);
}

TEST_CASE("elementwise ops") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {10, 20, 30, 40});
  Tensor c = add(a, b);
  CHECK(c[0] == 11.0);
  CHECK(c[3] == 44.0);
  Tensor d = sub(b, a);
  CHECK(d[0] == 9.0);
  Tensor h = hadamard(a, b);
  CHECK(h[2] == 90.0);
  Tensor s = scale(a, -2.0);
  CHECK(s[1] == -4.0);
  CHECK(sum(a) == 10.0);

  Tensor acc = Tensor::zeros({2, 2});
  axpy(acc, a, 2.0);
  axpy(acc, b);
  CHECK(acc[3] == 48.0);

  Tensor wrong({3}, {1, 2, 3});
  CHECK_THROWS_AS(add(a, wrong), DimensionError);
  CHECK_THROWS_AS(hadamard(a, wrong), DimensionError);
}

TEST_CASE("matmul kernels match loop oracle") {
  Rng rng(42);
  // A mix of awkward sizes: tall, wide, square, inner dim 1.
  const std::size_t dims[][3] = {{5, 7, 3}, {1, 9, 4}, {8, 1, 8}, {13, 13, 13}, {2, 31, 5}};
  for (auto& d : dims) {
    const std::size_t n = d[0], m = d[1], k = d[2];
    Tensor a = random_matrix(n, m, rng);
    Tensor b = random_matrix(m, k, rng);
    Tensor bt = random_matrix(k, m, rng);
    Tensor at = random_matrix(n, m, rng);  // used as lhs of tn: (n x m)^T * (n x k)
    Tensor b2 = random_matrix(n, k, rng);

    CHECK(max_abs_diff(matmul_nn(a, b), loop_matmul(a, b, false, false)) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, bt), loop_matmul(a, bt, false, true)) < 1e-12);
    CHECK(max_abs_diff(matmul_tn(at, b2), loop_matmul(at, b2, true, false)) < 1e-12);
  }
}

TEST_CASE("matmul dimension errors") {
  Tensor a({2, 3});
  Tensor b({4, 2});
  CHECK_THROWS_AS(matmul_nn(a, b), DimensionError);
  CHECK_THROWS_AS(matmul_nt(a, b), DimensionError);   // b.cols()=2 != 3
  CHECK_THROWS_AS(matmul_tn(a, b), DimensionError);   // b.rows()=4 != 2
}

TEST_CASE("transpose") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose(a);
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 2);
  CHECK(t(0, 1) == 4.0);
  CHECK(t(2, 0) == 3.0);
}

TEST_CASE("finite check") {
  Tensor a({2}, {1.0, 2.0});
  CHECK_NOTHROW(a.check_finite("here"));
  a[1] = std::nan("");
  CHECK_THROWS_AS(a.check_finite("here"), NumericError);
  a[1] = 1.0 / 0.0;
  CHECK_THROWS_AS(a.check_finite("here"), NumericError);
}

TEST_CASE("rng determinism and ranges") {
  Rng a(7), b(7), c(8);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  // Different seed, different stream (overwhelmingly).
  int diff = 0;
  Rng a2(7);
  for (int i = 0; i < 100; ++i)
    if (a2.uniform() != c.uniform()) ++diff;
  CHECK(diff > 90);

  Rng n(3);
  double m1 = 0.0, m2 = 0.0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) {
    const double z = n.normal();
    m1 += z;
    m2 += z * z;
  }
  m1 /= N;
  m2 /= N;
  CHECK(std::abs(m1) < 0.02);          // ~3 sigma for N=20000
  CHECK(std::abs(m2 - 1.0) < 0.03);

  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 5) == mix_seed(1, 5));
  CHECK_THROWS_AS(Rng(1).uniform(2.0, 2.0), ValidationError);
  CHECK_THROWS_AS(Rng(1).below(0), ValidationError);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  std::vector<int> w = v;
  Rng r1(99), r2(99);
  r1.shuffle(v);
  r2.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}
