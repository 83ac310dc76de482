#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "psqn/solver.hpp"

using namespace psqn;

namespace {

Vector gauss(std::mt19937_64& eng, int d, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(d);
  for (int j = 0; j < d; ++j) v(j) = nd(eng);
  return v;
}

struct Instance {
  Matrix a;
  Vector b;
  SmoothObjective obj;
};

Instance random_instance(std::mt19937_64& eng, int n, int d, Loss loss, double ridge) {
  Matrix a(n, d);
  Vector b(n);
  std::normal_distribution<double> nd;
  const Vector planted = gauss(eng, d);
  for (int i = 0; i < n; ++i) {
    a.row(i) = gauss(eng, d).transpose();
    const double z = a.row(i).dot(planted) + 0.5 * nd(eng);
    b(i) = loss == Loss::LogisticRidge ? (z >= 0 ? 1.0 : -1.0) : z;
  }
  return {a, b, SmoothObjective(Dataset::from_dense(a, b), loss, ridge)};
}

double composite(const SmoothObjective& obj, const Regularizer& reg, const Vector& x) {
  return obj.value(x) + reg.value(x);
}

// rho written out once more from the rate formula.
double rho_formula(double g, double G, double lq, double mu, double m, double eta) {
  return (G * g * g + 4 * eta * eta * mu * G * lq * (m + 1)) /
         ((eta * g * g - 4 * eta * eta * G * lq) * mu * m);
}

}  // namespace

TEST_CASE("full-batch ProxSVRG without a regularizer is gradient descent") {
  std::mt19937_64 eng(1);
  Instance inst = random_instance(eng, 30, 6, Loss::LogisticRidge, 0.05);
  SolverConfig c;
  c.kind = SolverKind::ProxSVRG;
  c.batch = 30;
  c.inner_loop = 100;
  c.epochs = 1;
  c.eta = 0.5 / inst.obj.lipschitz_mean();
  std::vector<Vector> iterates;
  RunOptions opt;
  opt.on_iterate = [&](const IterateEvent& e) { iterates.push_back(e.iterate); };
  run(inst.obj, Regularizer::zero(), c, opt);
  REQUIRE(iterates.size() == 100);
  Vector x = Vector::Zero(6);
  for (int k = 0; k < 100; ++k) {
    x = x - *c.eta * inst.obj.full_gradient(x);
    CHECK(iterates[k] == x);
  }
}

TEST_CASE("ProxGD on a diagonal ridge quadratic follows the closed-form recursion") {
  const int d = 5;
  Matrix a = Matrix::Zero(d, d);
  Vector b(d);
  for (int j = 0; j < d; ++j) {
    a(j, j) = 0.5 + j;
    b(j) = 1.0 - 0.3 * j;
  }
  const double ridge = 0.2;
  const SmoothObjective obj(Dataset::from_dense(a, b), Loss::SquaredError, ridge);
  Vector h(d);
  Vector xs(d);
  for (int j = 0; j < d; ++j) {
    h(j) = a(j, j) * a(j, j) / d + ridge;
    xs(j) = a(j, j) * b(j) / d / h(j);
  }
  const double lmax = h.maxCoeff();
  const double mu = h.minCoeff();
  SolverConfig c;
  c.kind = SolverKind::ProxGD;
  c.epochs = 60;
  c.eta = 1.0 / lmax;
  std::vector<Vector> iterates;
  RunOptions opt;
  opt.on_iterate = [&](const IterateEvent& e) { iterates.push_back(e.iterate); };
  run(obj, Regularizer::zero(), c, opt);
  for (int k = 1; k <= 60; ++k) {
    for (int j = 0; j < d; ++j) {
      const double want = xs(j) * (1.0 - std::pow(1.0 - h(j) / lmax, k));
      CHECK(std::abs(iterates[k - 1](j) - want) <= 1e-9);
    }
  }
  // the slowest coordinate contracts at exactly 1 - mu/L
  const int slow = [&] { Eigen::Index i; h.minCoeff(&i); return static_cast<int>(i); }();
  const double r = (iterates[40](slow) - xs(slow)) / (iterates[39](slow) - xs(slow));
  CHECK(r == doctest::Approx(1.0 - mu / lmax).epsilon(1e-8));
}

TEST_CASE("rate formula: worked example and limits") {
  const MetricBounds id{1.0, 1.0, 0.0, false};
  const RateReport r = rate_plan(id, 1.0, 1.0, 1000, 0.1);
  CHECK(r.rho == doctest::Approx(41.04 / 60.0).epsilon(1e-14));
  CHECK(r.rho == doctest::Approx(0.684).epsilon(1e-3));
  CHECK(r.eta_max == doctest::Approx(0.125));
  CHECK(r.feasible);

  const RateReport tiny = rate_plan(id, 1.0, 1.0, 1000, 1e-12);
  CHECK(tiny.rho > 1e6);
  CHECK_FALSE(tiny.feasible);

  const RateReport over = rate_plan(id, 1.0, 1.0, 1000, 0.2);
  CHECK_FALSE(over.feasible);
  CHECK_FALSE(over.min_inner_loop.has_value());
  CHECK_THROWS_AS(rate_plan(id, 1.0, 0.0, 1000, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(rate_plan({2.0, 1.0, 0.0, false}, 1.0, 1.0, 10, 0.1), std::invalid_argument);
}

TEST_CASE("rho decreases in m and min_inner_loop is the threshold") {
  std::mt19937_64 eng(2);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double g = 0.2 + ud(eng);
    const double G = g * (1.0 + 5.0 * ud(eng));
    const double lq = 0.5 + 5.0 * ud(eng);
    const double mu = 0.01 + 0.2 * ud(eng);
    const MetricBounds bd{g, G, 0.0, false};
    const double eta = (0.05 + 0.4 * ud(eng)) * g * g / (8 * G * lq);
    double prev = INFINITY;
    for (std::size_t m = 10; m <= 10240; m *= 2) {
      const RateReport r = rate_plan(bd, lq, mu, m, eta);
      CHECK(r.rho < prev);
      CHECK(r.rho == doctest::Approx(rho_formula(g, G, lq, mu, m, eta)).epsilon(1e-12));
      prev = r.rho;
    }
    const RateReport r = rate_plan(bd, lq, mu, 100, eta);
    REQUIRE(r.min_inner_loop.has_value());
    const double mm = static_cast<double>(*r.min_inner_loop);
    CHECK(rho_formula(g, G, lq, mu, mm, eta) < 1.0);
    if (mm > 1) CHECK(rho_formula(g, G, lq, mu, mm - 1, eta) >= 1.0);
  }
}

TEST_CASE("plan_step minimizes rho over (0, eta_max)") {
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const double g = 0.1 + ud(eng);
    const double G = g * (1.0 + 10.0 * ud(eng));
    const double lq = 0.5 + 10.0 * ud(eng);
    const double mu = 0.01 + 0.5 * ud(eng);
    const std::size_t m = 50 + static_cast<std::size_t>(5000 * ud(eng));
    const MetricBounds bd{g, G, 0.0, false};
    const double eta = plan_step(bd, lq, mu, m);
    const double eta_max = g * g / (8 * G * lq);
    CHECK(eta > 0.0);
    CHECK(eta < eta_max);
    const double best = rho_formula(g, G, lq, mu, static_cast<double>(m), eta);
    for (int k = 1; k < 4000; ++k) {
      const double e = eta_max * k / 4000.0;
      CHECK(rho_formula(g, G, lq, mu, static_cast<double>(m), e) >= best * (1 - 1e-12));
    }
  }
}

TEST_CASE("the optimum is a fixed point of the quasi-Newton step") {
  std::mt19937_64 eng(4);
  Instance inst = random_instance(eng, 40, 6, Loss::LogisticRidge, 0.1);
  const Regularizer reg = Regularizer::l1(0.05);
  const ReferenceSolution ref = reference_solution(inst.obj, reg, 1e-13);
  const Vector g = inst.obj.full_gradient(ref.x);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix b(6, 6);
    for (int j = 0; j < 6; ++j) b.col(j) = gauss(eng, 6);
    const Matrix hess = b.transpose() * b + 0.1 * Matrix::Identity(6, 6);
    const Vector s = gauss(eng, 6);
    const Metric m = Metric::build({s, hess * s}, 0.3 + 0.02 * trial);
    const Vector next = proximal_quasi_newton_step(reg, m, ref.x, g, 0.05 + 0.01 * trial);
    CHECK((next - ref.x).norm() <= 1e-9);
  }
  CHECK((proximal_quasi_newton_step(reg, Metric::identity(6), ref.x, g, 0.3) - ref.x).norm() <= 1e-9);
}

TEST_CASE("epoch output is the mean of the inner iterates and warmup is respected") {
  std::mt19937_64 eng(5);
  Instance inst = random_instance(eng, 50, 5, Loss::SquaredError, 0.1);
  SolverConfig c;
  c.kind = SolverKind::ProxSQN;
  c.epochs = 3;
  c.inner_loop = 35;
  c.batch = 5;
  c.hessian_batch = 10;
  c.metric_period = 7;
  c.eta = 0.02;
  std::vector<std::vector<Vector>> per_epoch(4);
  std::size_t first_scaled = 0;
  bool scaled_early = false;
  RunOptions opt;
  opt.on_iterate = [&](const IterateEvent& e) {
    per_epoch[e.epoch].push_back(e.iterate);
    if (e.scaled_step && first_scaled == 0) first_scaled = e.iteration;
    if (e.scaled_step && e.iteration <= 2 * c.metric_period) scaled_early = true;
  };
  const RunResult r = run(inst.obj, Regularizer::l1(0.01), c, opt);
  Vector mean = Vector::Zero(5);
  for (const Vector& x : per_epoch[3]) mean += x;
  mean /= 35.0;
  CHECK((mean - r.x).norm() <= 1e-14);
  CHECK_FALSE(scaled_early);
  CHECK(first_scaled == 2 * c.metric_period + 1);
  CHECK(r.counters.first_scaled_iteration == 2 * c.metric_period + 1);
  CHECK(r.counters.metric_rebuilds + r.counters.rejected_pairs == 105 / 7 - 1);
  CHECK(r.trace.size() == 3);
  CHECK(r.trace.back().iteration == 105);
  CHECK(r.counters.max_secant_error < 1e-10);
}

TEST_CASE("ProxSQN with the identity metric forced reproduces ProxSVRG exactly") {
  std::mt19937_64 eng(6);
  Instance inst = random_instance(eng, 60, 8, Loss::LogisticRidge, 0.1);
  const Regularizer reg = Regularizer::l1(0.02);
  SolverConfig c;
  c.kind = SolverKind::ProxSVRG;
  c.epochs = 5;
  c.batch = 4;
  c.seed = 77;
  c.eta = 0.05;
  const RunResult svrg = run(inst.obj, reg, c);
  c.kind = SolverKind::ProxSQN;
  c.force_identity_metric = true;
  const RunResult sqn = run(inst.obj, reg, c);
  CHECK(svrg.x == sqn.x);
  REQUIRE(svrg.trace.size() == sqn.trace.size());
  for (std::size_t k = 0; k < svrg.trace.size(); ++k) {
    CHECK(svrg.trace[k].objective == sqn.trace[k].objective);
    CHECK(svrg.trace[k].grad_evals == sqn.trace[k].grad_evals);
  }
  CHECK(sqn.counters.scaled_prox_calls == 0);
}

TEST_CASE("epoch suboptimality is non-increasing after epoch 2 at eta <= eta_max / 2") {
  int monotone = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 eng(100 + seed);
    Instance inst = random_instance(eng, 100, 10, Loss::LogisticRidge, 0.1);
    const Regularizer reg = Regularizer::l1(0.01);
    const double p_star = reference_solution(inst.obj, reg, 1e-12).objective;
    SolverConfig c;
    c.kind = SolverKind::ProxSQN;
    c.epochs = 12;
    c.batch = 5;
    c.hessian_batch = 20;
    c.seed = static_cast<std::uint64_t>(seed);
    const StepPlan plan = plan_auto_step(inst.obj, reg, c);
    c.eta = std::min(plan.eta, plan.report.eta_max / 2);
    RunOptions opt;
    opt.optimum = p_star;
    const RunResult r = run(inst.obj, reg, c, opt);
    bool ok = true;
    for (std::size_t k = 2; k < r.trace.size(); ++k) {
      if (r.trace[k - 1].suboptimality <= 1e-13) break;  // rounding floor
      if (r.trace[k].suboptimality > r.trace[k - 1].suboptimality) ok = false;
    }
    monotone += ok;
  }
  CHECK(monotone >= 19);
}

TEST_CASE("lasso: ProxSQN at the planned step decreases strictly to 1e-9 within 30 epochs") {
  std::mt19937_64 eng(7);
  Instance inst = random_instance(eng, 200, 20, Loss::SquaredError, 0.1);
  const Regularizer reg = Regularizer::l1(0.05);
  const double p_star = reference_solution(inst.obj, reg, 1e-12).objective;
  SolverConfig c;
  c.kind = SolverKind::ProxSQN;
  c.epochs = 30;
  c.batch = 10;
  c.hessian_batch = 50;
  c.seed = 3;
  c.eta = plan_auto_step(inst.obj, reg, c).eta;
  RunOptions opt;
  opt.optimum = p_star;
  const RunResult r = run(inst.obj, reg, c, opt);
  bool reached = false;
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    const double cur = r.trace[k].suboptimality;
    if (cur <= 1e-9) reached = true;
    if (k > 0 && r.trace[k - 1].suboptimality > 1e-13) {
      CHECK(cur < r.trace[k - 1].suboptimality);
    }
  }
  CHECK(reached);
}

TEST_CASE("reference solutions against independent solves") {
  std::mt19937_64 eng(8);
  SUBCASE("ridge regression closed form") {
    Instance inst = random_instance(eng, 40, 7, Loss::SquaredError, 0.3);
    const Matrix lhs = inst.a.transpose() * inst.a / 40.0 + 0.3 * Matrix::Identity(7, 7);
    const Vector want = lhs.ldlt().solve(inst.a.transpose() * inst.b / 40.0);
    const ReferenceSolution ref = reference_solution(inst.obj, Regularizer::zero(), 1e-12);
    CHECK((ref.x - want).norm() <= 1e-10);
    CHECK(ref.residual <= 1e-12);
  }
  SUBCASE("unregularized least squares") {
    Instance inst = random_instance(eng, 60, 10, Loss::SquaredError, 0.0);
    const Vector want = (inst.a.transpose() * inst.a).ldlt().solve(inst.a.transpose() * inst.b);
    const ReferenceSolution ref = reference_solution(inst.obj, Regularizer::zero(), 1e-12);
    CHECK((ref.x - want).norm() <= 1e-9);
  }
  SUBCASE("a large l1 weight gives zero") {
    Instance inst = random_instance(eng, 30, 5, Loss::LogisticRidge, 0.1);
    const double kill = inst.obj.full_gradient(Vector::Zero(5)).cwiseAbs().maxCoeff();
    const ReferenceSolution ref = reference_solution(inst.obj, Regularizer::l1(kill), 1e-12);
    CHECK(ref.x.norm() == 0.0);
    const ReferenceSolution below =
        reference_solution(inst.obj, Regularizer::l1(0.9 * kill), 1e-12);
    CHECK(below.x.norm() > 0.0);
  }
}

TEST_CASE("ProxNewtonFull: one step on least squares, quadratic convergence on logistic") {
  std::mt19937_64 eng(9);
  Instance ls = random_instance(eng, 50, 8, Loss::SquaredError, 0.0);
  const Vector want = (ls.a.transpose() * ls.a).ldlt().solve(ls.a.transpose() * ls.b);
  SolverConfig c;
  c.kind = SolverKind::ProxNewtonFull;
  c.epochs = 3;
  std::vector<Vector> it;
  RunOptions opt;
  opt.on_iterate = [&](const IterateEvent& e) { it.push_back(e.iterate); };
  run(ls.obj, Regularizer::zero(), c, opt);
  for (const Vector& x : it) CHECK((x - want).norm() <= 1e-10 * (1 + want.norm()));

  Instance lg = random_instance(eng, 80, 6, Loss::LogisticRidge, 0.05);
  const Vector xs = reference_solution(lg.obj, Regularizer::zero(), 1e-14).x;
  it.clear();
  c.epochs = 8;
  run(lg.obj, Regularizer::zero(), c, opt);
  double prev = xs.norm();
  int quadratic_steps = 0;
  for (const Vector& x : it) {
    const double err = (x - xs).norm();
    if (prev < 1e-7) break;
    if (prev < 0.5) {
      CHECK(err <= 10.0 * prev * prev);
      ++quadratic_steps;
    }
    prev = err;
  }
  CHECK(quadratic_steps >= 2);
  CHECK(prev < 1e-7);
}

TEST_CASE("dense scaled prox: diagonal metric reduces to soft thresholding") {
  const Vector diag = (Vector(3) << 1.0, 2.0, 4.0).finished();
  const Vector z = (Vector(3) << 1.0, -0.1, 3.0).finished();
  const Vector y = dense_scaled_prox(Regularizer::l1(0.5), diag.asDiagonal().toDenseMatrix(), z, 1.0);
  CHECK(y(0) == doctest::Approx(0.5));
  CHECK(y(1) == doctest::Approx(0.0));
  CHECK(y(2) == doctest::Approx(3.0 - 0.125));
}

TEST_CASE("FISTA reaches the reference optimum") {
  std::mt19937_64 eng(10);
  Instance inst = random_instance(eng, 100, 10, Loss::LogisticRidge, 0.1);
  const Regularizer reg = Regularizer::l1(0.01);
  const ReferenceSolution ref = reference_solution(inst.obj, reg, 1e-12);
  SolverConfig c;
  c.kind = SolverKind::FISTA;
  c.epochs = 400;
  const RunResult r = run(inst.obj, reg, c);
  CHECK(composite(inst.obj, reg, r.x) - ref.objective <= 1e-10);
  CHECK(r.trace.size() == 400);
  CHECK(r.trace.back().grad_evals == 400u * 100u);
}

TEST_CASE("divergence is detected and carries the partial trace") {
  std::mt19937_64 eng(11);
  Instance inst = random_instance(eng, 40, 5, Loss::SquaredError, 0.1);
  SolverConfig c;
  c.kind = SolverKind::ProxGD;
  c.epochs = 200;
  c.eta = 50.0 / inst.obj.lipschitz_mean();
  try {
    run(inst.obj, Regularizer::zero(), c);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK_FALSE(e.trace.empty());
    CHECK(e.trace.size() < 200);
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("invalid configurations are rejected") {
  std::mt19937_64 eng(12);
  Instance inst = random_instance(eng, 10, 3, Loss::SquaredError, 0.1);
  auto bad = [&](auto mutate) {
    SolverConfig c;
    c.hessian_batch = 5;
    mutate(c);
    CHECK_THROWS_AS(run(inst.obj, Regularizer::zero(), c), std::invalid_argument);
  };
  bad([](SolverConfig& c) { c.epochs = 0; });
  bad([](SolverConfig& c) { c.alpha = 1.0; });
  bad([](SolverConfig& c) { c.eta = -1.0; });
  bad([](SolverConfig& c) { c.batch = 11; });
  bad([](SolverConfig& c) { c.sampling = SamplingKind::WeightedSingle; c.batch = 2; });
  bad([](SolverConfig& c) { c.hessian_batch = 11; });
  bad([](SolverConfig& c) { c.metric_period = 0; });
  bad([](SolverConfig& c) { c.step_decay = 0.1; });
  bad([](SolverConfig& c) { c.divergence_factor = 1.0; });
  bad([](SolverConfig& c) { c.kind = SolverKind::ProxNewtonFull; c.dense_limit = 2; });
  CHECK(solver_kind_from_string("prox_sqn") == SolverKind::ProxSQN);
  CHECK_FALSE(solver_kind_from_string("sgd").has_value());
}
