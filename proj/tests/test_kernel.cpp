#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fitr/kernel.hpp"
#include "fitr/rng.hpp"

using Catch::Approx;
using namespace fitr;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.uniform(-2.0, 2.0);
  return x;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Brute-force median of all i<j distances, written independently of the library.
double brute_median_distance(const Matrix& x) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      d.push_back(std::sqrt(s));
    }
  std::sort(d.begin(), d.end());
  const auto m = d.size();
  return m % 2 ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
}

}  // namespace

TEST_CASE("kernel_eval on hand-checked points", "[kernel]") {
  const auto g1 = KernelSpec::gaussian(1.0);
  CHECK(kernel_eval(KernelSpec::gaussian(3.7), vec({0.3, -1.2}), vec({0.3, -1.2})) == 1.0);
  CHECK(kernel_eval(KernelSpec::linear(), vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK(kernel_eval(g1, vec({0, 0}), vec({1, 1})) == Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(kernel_eval(g1, vec({0, 0}), vec({1, 1})) == Approx(0.13534).margin(1e-5));
}

TEST_CASE("kernel_eval rejects bad input", "[kernel]") {
  CHECK_THROWS_AS(kernel_eval(KernelSpec::linear(), vec({1, 2}), vec({1, 2, 3})), Error);
  CHECK_THROWS_AS(kernel_eval(KernelSpec::linear(), vec({1, NAN}), vec({1, 2})), Error);
  CHECK_THROWS_AS(kernel_eval(KernelSpec::gaussian(1), vec({INFINITY}), vec({1})), Error);
  CHECK_THROWS_AS(KernelSpec::gaussian(0.0), Error);
  CHECK_THROWS_AS(KernelSpec::gaussian(-1.0), Error);
  CHECK_FALSE(KernelSpec::linear().bandwidth().has_value());
  CHECK_THROWS_AS(KernelSpec::linear().sigma(), Error);
}

TEST_CASE("gram_matrix examples", "[kernel]") {
  Matrix one(1, 3);
  one << 0.5, -0.2, 1.0;
  CHECK(gram_matrix(KernelSpec::gaussian(2.0), one, one)(0, 0) == 1.0);

  const Matrix id = Matrix::Identity(2, 2);
  CHECK(gram_matrix(KernelSpec::linear(), id, id).isApprox(Matrix::Identity(2, 2)));

  Matrix x(2, 2);
  x << 0, 0, 1, 1;
  const Matrix g = gram_matrix(KernelSpec::gaussian(1.0), x, x);
  CHECK(g(0, 0) == 1.0);
  CHECK(g(1, 1) == 1.0);
  CHECK(g(0, 1) == Approx(std::exp(-2.0)).epsilon(1e-14));
  CHECK(g(1, 0) == g(0, 1));

  CHECK_THROWS_AS(gram_matrix(KernelSpec::linear(), Matrix(2, 3), Matrix(2, 2)), Error);
}

TEST_CASE("gram entries equal kernel_eval", "[kernel]") {
  Rng rng(7);
  const Matrix a = random_matrix(rng, 5, 3), b = random_matrix(rng, 4, 3);
  for (const auto& spec : {KernelSpec::linear(), KernelSpec::gaussian(0.7)}) {
    const Matrix g = gram_matrix(spec, a, b);
    for (Eigen::Index i = 0; i < 5; ++i)
      for (Eigen::Index j = 0; j < 4; ++j)
        CHECK(g(i, j) == Approx(kernel_eval(spec, a.row(i).transpose(), b.row(j).transpose())).epsilon(1e-13));
  }
}

TEST_CASE("Gaussian Gram is positive semidefinite", "[kernel][property]") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(49));
    const Matrix x = random_matrix(rng, n, 1 + static_cast<Eigen::Index>(rng.below(5)));
    const auto spec = KernelSpec::gaussian(rng.uniform(0.2, 3.0));
    const Matrix g = gram_matrix(spec, x, x);
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * g.trace());
  }
}

TEST_CASE("kernel symmetry and Gaussian range", "[kernel][property]") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(6));
    Vector x(d), y(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      x[j] = rng.uniform(-5, 5);
      y[j] = rng.uniform(-5, 5);
    }
    const auto gs = KernelSpec::gaussian(rng.uniform(0.05, 2.0));
    CHECK(kernel_eval(KernelSpec::linear(), x, y) == kernel_eval(KernelSpec::linear(), y, x));
    CHECK(kernel_eval(gs, x, y) == kernel_eval(gs, y, x));
    const double k = kernel_eval(gs, x, y);
    CHECK(k > 0.0);
    CHECK(k <= 1.0);
  }
}

TEST_CASE("median_bandwidth examples", "[kernel]") {
  Matrix two(2, 1);
  two << 0, 2;
  CHECK(median_bandwidth(two) == Approx(0.5));

  Matrix three(3, 1);
  three << 0, 1, 2;
  CHECK(median_bandwidth(three) == Approx(1.0));

  Matrix perm(3, 1);
  perm << 2, 0, 1;
  CHECK(median_bandwidth(perm) == median_bandwidth(three));

  CHECK_THROWS_AS(median_bandwidth(Matrix::Ones(4, 2)), Error);
  CHECK_THROWS_AS(median_bandwidth(Matrix::Ones(1, 2)), Error);
}

TEST_CASE("median_bandwidth matches brute force under permutation and duplication", "[kernel][property]") {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(30));
    Matrix x = random_matrix(rng, n, 3);
    CHECK(median_bandwidth(x) == Approx(1.0 / brute_median_distance(x)).epsilon(1e-14));

    Matrix shuffled = x;
    for (Eigen::Index i = n - 1; i > 0; --i)
      shuffled.row(i).swap(shuffled.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i + 1)))));
    CHECK(median_bandwidth(shuffled) == Approx(median_bandwidth(x)).epsilon(1e-15));

    Matrix dup(n + 1, 3);
    dup.topRows(n) = x;
    dup.row(n) = x.row(0);
    CHECK(median_bandwidth(dup) == Approx(1.0 / brute_median_distance(dup)).epsilon(1e-14));
  }
}
