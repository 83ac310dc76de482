#include <cmath>
#include <random>

#include "doctest.h"
#include "psqn/model.hpp"

using namespace psqn;

namespace {

Matrix random_matrix(std::mt19937_64& eng, int rows, int cols, double density = 1.0) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  Matrix a = Matrix::Zero(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (ud(eng) < density) a(i, j) = nd(eng);
    }
    if (a.row(i).squaredNorm() == 0.0) a(i, i % cols) = 1.0;
  }
  return a;
}

Vector random_labels(std::mt19937_64& eng, int n, Loss loss) {
  std::normal_distribution<double> nd;
  Vector b(n);
  for (int i = 0; i < n; ++i) {
    const double z = nd(eng);
    b(i) = loss == Loss::LogisticRidge ? (z >= 0 ? 1.0 : -1.0) : z;
  }
  return b;
}

Vector gauss(std::mt19937_64& eng, int d) {
  std::normal_distribution<double> nd;
  Vector v(d);
  for (int j = 0; j < d; ++j) v(j) = nd(eng);
  return v;
}

// Second derivative of the scalar loss, written out independently.
double curvature(Loss loss, double label, double z) {
  if (loss == Loss::SquaredError) return 1.0;
  const double p = 1.0 / (1.0 + std::exp(-label * z));
  return p * (1.0 - p);
}

}  // namespace

TEST_CASE("dataset stores CSR rows and validates them") {
  const Dataset ds = Dataset::from_rows(4, {{{0, 1.5}, {3, -2.0}}, {}, {{2, 0.25}}}, {1.0, -1.0, 3.0});
  CHECK(ds.n() == 3);
  CHECK(ds.d() == 4);
  CHECK(ds.nnz() == 3);
  CHECK(ds.row(1).size() == 0);
  CHECK(ds.row(0).indices[1] == 3);
  CHECK(ds.row(0).values[1] == -2.0);
  const Matrix dense = ds.to_dense();
  CHECK(dense(0, 3) == -2.0);
  CHECK(dense(2, 2) == 0.25);
  CHECK(Dataset::from_dense(dense, Vector::Map(ds.labels().data(), 3)) == ds);

  CHECK_THROWS_AS(Dataset::from_rows(4, {{{2, 1.0}, {1, 1.0}}}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Dataset::from_rows(4, {{{4, 1.0}}}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Dataset::from_rows(4, {{{1, 1.0}}}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(Dataset::from_rows(2, {{{0, NAN}}}, {1.0}), std::invalid_argument);
}

TEST_CASE("binary labels map non-positive values to -1") {
  const Dataset ds = Dataset::from_rows(1, {{{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}}, {0.0, 2.0, -3.0});
  const Dataset b = ds.with_binary_labels();
  CHECK(b.label(0) == -1.0);
  CHECK(b.label(1) == 1.0);
  CHECK(b.label(2) == -1.0);
}

TEST_CASE("objective rejects invalid inputs") {
  const Dataset ds = Dataset::from_rows(2, {{{0, 1.0}}, {}}, {1.0, 0.5});
  CHECK_THROWS_AS(SmoothObjective(ds, Loss::SquaredError, 0.0), std::invalid_argument);
  CHECK_NOTHROW(SmoothObjective(ds, Loss::SquaredError, 0.1));
  CHECK_THROWS_AS(SmoothObjective(ds, Loss::LogisticRidge, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(SmoothObjective(ds, Loss::SquaredError, -1.0), std::invalid_argument);
  const SmoothObjective obj(ds, Loss::SquaredError, 0.1);
  CHECK_THROWS(obj.value(Vector::Zero(3)));
  CHECK_THROWS(obj.component_gradient(2, Vector::Zero(2)));
}

TEST_CASE("Lipschitz constants follow the closed forms") {
  const Dataset ds = Dataset::from_rows(2, {{{0, 3.0}, {1, 4.0}}, {{1, 2.0}}}, {1.0, -1.0});
  const SmoothObjective sq(ds, Loss::SquaredError, 0.5);
  CHECK(sq.lipschitz(0) == doctest::Approx(25.5));
  CHECK(sq.lipschitz(1) == doctest::Approx(4.5));
  CHECK(sq.lipschitz_mean() == doctest::Approx(15.0));
  CHECK(sq.lipschitz_max() == doctest::Approx(25.5));
  CHECK(sq.strong_convexity() == 0.5);
  const SmoothObjective lg(ds, Loss::LogisticRidge, 0.5);
  CHECK(lg.lipschitz(0) == doctest::Approx(6.75));
  CHECK(lg.lipschitz(1) == doctest::Approx(1.5));
}

TEST_CASE("values at known points") {
  const Dataset ds = Dataset::from_rows(2, {{{0, 1.0}}, {{1, 2.0}}}, {1.0, -1.0});
  const SmoothObjective lg(ds, Loss::LogisticRidge, 0.0);
  CHECK(lg.value(Vector::Zero(2)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const SmoothObjective sq(ds, Loss::SquaredError, 2.0);
  // 1/2 [ (x0 - 1)^2 + (2 x1 + 1)^2 ] / 2 + ||x||^2
  const Vector x = Vector::Constant(2, 1.0);
  CHECK(sq.value(x) == doctest::Approx(0.5 * (0.0 + 9.0) / 2.0 + 2.0));
  // extreme margins stay finite
  const Vector big = Vector::Constant(2, 800.0);
  CHECK(std::isfinite(lg.value(big)));
  CHECK(std::isfinite(lg.value(-big)));
  CHECK(lg.full_gradient(big).allFinite());
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 eng(11);
  for (Loss loss : {Loss::SquaredError, Loss::LogisticRidge}) {
    const Matrix a = random_matrix(eng, 12, 5, 0.7);
    const SmoothObjective obj(Dataset::from_dense(a, random_labels(eng, 12, loss)), loss, 0.3);
    for (int trial = 0; trial < 5; ++trial) {
      const Vector x = gauss(eng, 5);
      const Vector g = obj.full_gradient(x);
      const double h = 1e-6;
      for (int j = 0; j < 5; ++j) {
        Vector e = Vector::Zero(5);
        e(j) = h;
        const double fd = (obj.value(x + e) - obj.value(x - e)) / (2 * h);
        CHECK(g(j) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
      }
      for (std::size_t i = 0; i < obj.n(); i += 5) {
        const Vector gi = obj.component_gradient(i, x);
        for (int j = 0; j < 5; ++j) {
          Vector e = Vector::Zero(5);
          e(j) = h;
          const double fd =
              (obj.component_value(i, x + e) - obj.component_value(i, x - e)) / (2 * h);
          CHECK(gi(j) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
      }
    }
  }
}

TEST_CASE("full and batch gradients aggregate component gradients") {
  std::mt19937_64 eng(3);
  const Matrix a = random_matrix(eng, 9, 4);
  const SmoothObjective obj(Dataset::from_dense(a, random_labels(eng, 9, Loss::LogisticRidge)),
                            Loss::LogisticRidge, 0.2);
  const Vector x = gauss(eng, 4);
  Vector sum = Vector::Zero(4);
  for (std::size_t i = 0; i < 9; ++i) sum += obj.component_gradient(i, x);
  CHECK((obj.full_gradient(x) - sum / 9.0).norm() < 1e-14);
  const std::vector<std::size_t> batch = {1, 4, 7};
  const Vector expected =
      obj.component_gradient(1, x) + obj.component_gradient(4, x) + obj.component_gradient(7, x);
  CHECK((obj.batch_gradient(batch, x) - expected).norm() < 1e-14);
  Vector acc = Vector::Ones(4);
  obj.add_component_gradient(4, x, -2.0, acc);
  CHECK((acc - (Vector::Ones(4) - 2.0 * obj.component_gradient(4, x))).norm() < 1e-15);
}

TEST_CASE("Hessian-vector products match an independent dense Hessian") {
  std::mt19937_64 eng(5);
  for (Loss loss : {Loss::SquaredError, Loss::LogisticRidge}) {
    const int n = 15;
    const int d = 6;
    const Matrix a = random_matrix(eng, n, d, 0.6);
    const Vector b = random_labels(eng, n, loss);
    const double ridge = 0.25;
    const SmoothObjective obj(Dataset::from_dense(a, b), loss, ridge);
    const std::vector<std::size_t> batch = {0, 3, 4, 10, 14};
    const Vector x = gauss(eng, d);
    const Vector s = gauss(eng, d);
    Matrix oracle = Matrix::Zero(d, d);
    for (std::size_t i : batch) {
      const Vector ai = a.row(static_cast<int>(i)).transpose();
      oracle += curvature(loss, b(static_cast<int>(i)), ai.dot(x)) * ai * ai.transpose();
      oracle += ridge * Matrix::Identity(d, d);
    }
    CHECK((obj.hessian_vec(batch, x, s) - oracle * s).norm() < 1e-12 * (1 + (oracle * s).norm()));
    CHECK((obj.batch_hessian(batch, x) - oracle).norm() < 1e-12 * (1 + oracle.norm()));

    // full Hessian against finite differences of the gradient
    const Matrix h = obj.full_hessian(x);
    const double eps = 1e-6;
    for (int j = 0; j < d; ++j) {
      Vector e = Vector::Zero(d);
      e(j) = eps;
      const Vector fd = (obj.full_gradient(x + e) - obj.full_gradient(x - e)) / (2 * eps);
      CHECK((h.col(j) - fd).norm() < 1e-6);
    }
  }
}

TEST_CASE("curvature pairs are sandwiched by the batch spectrum") {
  std::mt19937_64 eng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Loss loss = trial % 2 ? Loss::LogisticRidge : Loss::SquaredError;
    const Matrix a = random_matrix(eng, 20, 8, 0.5);
    const SmoothObjective obj(Dataset::from_dense(a, random_labels(eng, 20, loss)), loss, 0.05);
    const std::vector<std::size_t> batch = {1, 2, 5, 8, 13, 19};
    const Vector x = gauss(eng, 8);
    const Vector s = gauss(eng, 8);
    const Vector y = obj.hessian_vec(batch, x, s);
    const BatchHessianSpectrum sp = obj.batch_spectrum(batch, x);
    REQUIRE_FALSE(sp.degenerate);
    const double ss = s.squaredNorm();
    CHECK(s.dot(y) >= sp.lambda_lo * ss * (1 - 1e-12));
    CHECK(s.dot(y) <= sp.lambda_hi * ss * (1 + 1e-12));
    CHECK(y.squaredNorm() <= sp.lambda_hi * s.dot(y) * (1 + 1e-12));
  }
}

TEST_CASE("singular batch Hessians are flagged degenerate") {
  const Dataset ds = Dataset::from_rows(3, {{{0, 1.0}}, {{1, 1.0}}}, {1.0, 2.0});
  const SmoothObjective obj(ds, Loss::SquaredError, 0.0);
  const std::vector<std::size_t> batch = {0, 1};
  const BatchHessianSpectrum sp = obj.batch_spectrum(batch, Vector::Zero(3));
  CHECK(sp.degenerate);
  CHECK(sp.lambda_lo == 0.0);
  CHECK(sp.lambda_hi == doctest::Approx(1.0));
  CHECK_THROWS_AS(obj.batch_spectrum(batch, Vector::Zero(3), 2), std::invalid_argument);
}
