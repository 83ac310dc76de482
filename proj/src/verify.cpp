#include "psqn/verify.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "psqn/experiment.hpp"
#include "psqn/prox.hpp"
#include "psqn/sampler.hpp"
#include "psqn/solver.hpp"

namespace psqn {

std::optional<VerifyLevel> verify_level_from_string(const std::string& name) {
  if (name == "fast") return VerifyLevel::Fast;
  if (name == "full") return VerifyLevel::Full;
  return std::nullopt;
}

void perturb_secant(Metric& metric, double delta) {
  if (metric.is_identity()) return;
  Vector u = metric.u();
  u(0) += delta;
  metric = Metric::from_parts(metric.tau(), metric.alpha(), std::move(u));
}

namespace {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}
  double normal() { return normal_(eng_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  std::size_t pick(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_);
  }
  Vector gauss(std::size_t d) {
    Vector v(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = normal();
    return v;
  }
  std::uint64_t word() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

SmoothObjective random_objective(Gen& g, std::size_t n, std::size_t d, Loss loss, double ridge,
                                 bool unit_rows = false) {
  Matrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Vector b(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double scale = std::exp(g.uniform(-1.0, 1.0));
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = scale * g.normal();
    if (unit_rows) a.row(i).normalize();
    const double z = g.normal();
    b(i) = loss == Loss::LogisticRidge ? (z > 0.0 ? 1.0 : -1.0) : z;
  }
  return SmoothObjective(Dataset::from_dense(a, b), loss, ridge);
}

struct SampledPair {
  CurvaturePair pair;
  BatchHessianSpectrum spectrum;
};

// A curvature pair from a random batch Hessian at a random point.
SampledPair sample_pair(Gen& g, std::size_t d) {
  const std::size_t n = 3 * d + 8;
  const Loss loss = g.pick(0, 1) ? Loss::LogisticRidge : Loss::SquaredError;
  const SmoothObjective obj = random_objective(g, n, d, loss, g.uniform(0.01, 0.5));
  Rng rng(g.word());
  const auto batch = sample_without_replacement(rng, n, std::min<std::size_t>(n, 10));
  const Vector x = g.gauss(d);
  const Vector s = g.gauss(d) * std::pow(10.0, g.uniform(-3.0, 1.0));
  SampledPair out;
  out.pair = {s, obj.hessian_vec(batch, x, s)};
  out.spectrum = obj.batch_spectrum(batch, x);
  return out;
}

std::pair<double, double> eigen_extremes(const Matrix& m) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

class Tally {
 public:
  explicit Tally(std::string name, bool advisory = false) {
    result_.name = std::move(name);
    result_.advisory = advisory;
    result_.worst_ratio = -std::numeric_limits<double>::infinity();
    start_ = std::chrono::steady_clock::now();
  }
  // Records one trial: passes iff measured <= allowed.
  void check(double measured, double allowed) {
    ++result_.trials;
    const bool ok = measured <= allowed;
    if (!ok) ++result_.violations;
    const double ratio = allowed > 0.0 ? measured / allowed : (ok ? 0.0 : 1e300);
    if (std::isnan(ratio) || std::isnan(measured)) {
      ++result_.violations;
      result_.worst_ratio = std::numeric_limits<double>::infinity();
    } else {
      result_.worst_ratio = std::max(result_.worst_ratio, ratio);
    }
  }
  PropertyResult finish(std::string detail = {}) {
    result_.passed = result_.violations == 0;
    result_.detail = std::move(detail);
    result_.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return result_;
  }

 private:
  PropertyResult result_;
  std::chrono::steady_clock::time_point start_;
};

void apply_fault(const VerifyOptions& o, Metric& m) {
  if (o.metric_fault) o.metric_fault(m);
}

PropertyResult check_secant(Gen& g, const VerifyOptions& o) {
  Tally t("secant_identity");
  std::size_t skipped = 0;
  const std::size_t dims[] = {2, 8, 32};
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    const std::size_t d = dims[trial % 3];
    const SampledPair sp = sample_pair(g, d);
    Metric m = Metric::build(sp.pair, g.uniform(0.05, 0.95));
    const bool active = m.rank_one_active();
    apply_fault(o, m);
    if (!active) {
      ++skipped;
      continue;
    }
    t.check((m.apply_inverse(sp.pair.y) - sp.pair.s).norm(), 1e-10 * (1.0 + sp.pair.s.norm()));
  }
  return t.finish("||H^-1 y - s|| <= 1e-10 (1 + ||s||); " + std::to_string(skipped) + " skipped");
}

PropertyResult check_upper_bound(Gen& g, const VerifyOptions& o, PropertyResult& advisory) {
  Tally t("eigenvalue_upper_bound");
  Tally lower("eigenvalue_lower_bound", true);
  std::size_t tau_violations = 0;
  const std::size_t dims[] = {2, 4, 8, 16, 32};
  for (std::size_t trial = 0; trial < 200; ++trial) {
    const std::size_t d = dims[trial % 5];
    const SampledPair sp = sample_pair(g, d);
    const double alpha = g.uniform(0.05, 0.95);
    Metric m = Metric::build(sp.pair, alpha);
    apply_fault(o, m);
    const auto [lo, hi] = eigen_extremes(m.dense());
    const MetricBounds b = theorem1_bounds(sp.spectrum, alpha, d);
    t.check(hi, b.gamma_hi + 1e-9);
    // exact comparison: tau is a Rayleigh-type quotient of the batch Hessian
    if (!(m.tau() >= 1.0 / sp.spectrum.lambda_hi && m.tau() <= 1.0 / sp.spectrum.lambda_lo)) {
      ++tau_violations;
      t.check(1.0, 0.0);
    }
    if (!b.degenerate && lo > 0.0) lower.check(b.log_gamma_lo - std::log(lo), 1e-9);
  }
  advisory = lower.finish("log gamma <= log sigma_min(H); reported only");
  return t.finish("sigma_max(H) <= d Lambda / alpha + 1e-9 and 1/Lambda <= tau <= 1/lambda; " +
                  std::to_string(tau_violations) + " tau violations");
}

Regularizer random_l1(Gen& g) {
  return g.pick(0, 4) == 0 ? Regularizer::zero() : Regularizer::l1(g.uniform(0.0, 1.0));
}

PropertyResult check_scaled_prox(Gen& g) {
  Tally t("scaled_prox_oracle");
  double worst_residual = 0.0;
  std::size_t residual_violations = 0;
  for (std::size_t trial = 0; trial < 200; ++trial) {
    const std::size_t d = trial % 2 ? 16 : 3;
    ScaledProxProblem p;
    p.diag = Vector(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < p.diag.size(); ++j) p.diag(j) = std::exp(g.uniform(-1.0, 1.0));
    p.sign = g.pick(0, 1) ? 1 : -1;
    p.rank1 = g.gauss(d);
    if (p.sign < 0) {
      const double q = p.rank1.cwiseAbs2().cwiseQuotient(p.diag).sum();
      p.rank1 *= std::sqrt(g.uniform(0.05, 0.9) / q);
    }
    p.eta = g.uniform(0.1, 2.0);
    p.x = 2.0 * g.gauss(d);
    const Regularizer reg = random_l1(g);
    const ScaledProxResult r = scaled_prox_detailed(reg, p);
    const Vector oracle = subproblem_oracle(reg, p);
    t.check((r.y - oracle).norm(), 1e-8);
    worst_residual = std::max(worst_residual, r.residual);
    if (!(r.residual < 1e-10)) {
      ++residual_violations;
      t.check(1.0, 0.0);
    }
  }
  std::ostringstream detail;
  detail << "||scaled_prox - oracle|| <= 1e-8; worst root residual " << worst_residual << " ("
         << residual_violations << " >= 1e-10)";
  return t.finish(detail.str());
}

PropertyResult check_nonexpansive(Gen& g, const VerifyOptions& o) {
  Tally t("scaled_prox_nonexpansive");
  for (std::size_t k = 0; k < 50; ++k) {
    const std::size_t d = g.pick(2, 32);
    Metric m = Metric::build(sample_pair(g, d).pair, g.uniform(0.05, 0.95));
    apply_fault(o, m);
    const auto [lo, hi] = eigen_extremes(m.dense());
    const double eta = g.uniform(0.05, 2.0);
    const Regularizer reg = random_l1(g);
    for (std::size_t j = 0; j < 500; ++j) {
      const double scale = std::pow(10.0, g.uniform(-2.0, 1.0));
      const Vector x = scale * g.gauss(d);
      const Vector y = x + scale * std::pow(10.0, g.uniform(-3.0, 0.0)) * g.gauss(d);
      const Vector px = scaled_prox(reg, make_prox_problem(m, eta, x));
      const Vector py = scaled_prox(reg, make_prox_problem(m, eta, y));
      t.check((px - py).norm(), (hi / lo) * (x - y).norm() * (1.0 + 1e-12));
    }
  }
  return t.finish("||prox(x) - prox(y)|| <= (Gamma/gamma) ||x - y||, dense eigen-extremes");
}

// Global Lipschitz constant of grad F from the dense Hessian envelope.
double lipschitz_bound(const SmoothObjective& obj) {
  const Matrix a = obj.data().to_dense();
  const double top = eigen_extremes(a.transpose() * a).second / static_cast<double>(obj.n());
  return (obj.loss() == Loss::LogisticRidge ? 0.25 * top : top) + obj.ridge();
}

PropertyResult check_descent(Gen& g, const VerifyOptions& o) {
  Tally t("generalized_descent");
  for (std::size_t trial = 0; trial < 300; ++trial) {
    const std::size_t d = g.pick(2, 16);
    const Loss loss = trial % 2 ? Loss::LogisticRidge : Loss::SquaredError;
    const SmoothObjective obj = random_objective(g, 20, d, loss, g.uniform(0.0, 0.3));
    const Regularizer reg = random_l1(g);
    const double lip = lipschitz_bound(obj);
    Metric m = Metric::build(sample_pair(g, d).pair, g.uniform(0.05, 0.95));
    apply_fault(o, m);
    const ScaledProxProblem hp = make_prox_problem(m, 1.0, Vector::Zero(static_cast<Eigen::Index>(d)));
    const Vector x = g.gauss(d);
    const Vector grad = obj.full_gradient(x);
    const Vector v = grad + g.uniform(0.0, 1.0) * g.gauss(d);
    const Vector y = x + g.gauss(d);
    const double eta = std::pow(10.0, g.uniform(-2.0, 0.5)) / lip;
    const Vector xp = proximal_quasi_newton_step(reg, m, x, v, eta);
    const Vector gm = (x - xp) / eta;
    const Vector delta = v - grad;
    const auto P = [&](const Vector& z) { return obj.value(z) + reg.value(z); };
    const double rhs = P(xp) + gm.dot(hp.apply_metric(y - x)) + delta.dot(xp - y) +
                       eta * gm.dot(hp.apply_metric(gm)) - 0.5 * lip * eta * eta * gm.squaredNorm();
    const double lhs = P(y);
    t.check(rhs - lhs, 1e-9 * (1.0 + std::abs(lhs) + std::abs(rhs)));
  }
  return t.finish("P(y) >= P(x+) + g'H(y-x) + D'(x+-y) + eta||g||_H^2 - L eta^2/2 ||g||^2");
}

PropertyResult check_fixed_point(Gen& g, const VerifyOptions& o) {
  Tally t("fixed_point");
  for (std::size_t trial = 0; trial < 40; ++trial) {
    const std::size_t d = g.pick(2, 12);
    const Loss loss = trial % 2 ? Loss::LogisticRidge : Loss::SquaredError;
    const SmoothObjective obj = random_objective(g, 30, d, loss, 0.1);
    const Regularizer reg = Regularizer::l1(g.uniform(0.01, 0.2));
    const Vector star = reference_solution(obj, reg, 1e-13).x;
    Metric m = Metric::build(sample_pair(g, d).pair, g.uniform(0.05, 0.95));
    apply_fault(o, m);
    const double eta = g.uniform(0.01, 1.0);
    const Vector next = proximal_quasi_newton_step(reg, m, star, obj.full_gradient(star), eta);
    t.check((next - star).norm(), 1e-9);
  }
  return t.finish("update at (x*, grad F(x*)) returns x* within 1e-9");
}

PropertyResult check_rate_formula() {
  Tally t("rate_formula");
  MetricBounds unit;
  unit.gamma_lo = unit.gamma_hi = 1.0;
  const RateReport r = rate_plan(unit, 1.0, 1.0, 1000, 0.1);
  // (1 + 4 * 0.01 * 1001) / ((0.1 - 0.04) * 1000)
  t.check(std::abs(r.rho - 41.04 / 60.0), 1e-12);
  t.check(r.feasible ? 0.0 : 1.0, 0.0);
  t.check(std::abs(r.eta_max - 0.125), 1e-15);
  return t.finish("rho(gamma = Gamma = mu = L_Q = 1, eta = 0.1, m = 1000) = 0.684");
}

struct EstimatorCase {
  std::size_t n;
  SamplingKind kind;
  std::size_t batch;
  bool unit_rows;
};

PropertyResult check_unbiased(Gen& g) {
  Tally t("estimator_unbiased");
  const EstimatorCase cases[] = {{5, SamplingKind::UniformBatch, 2, false},
                                 {6, SamplingKind::UniformBatch, 2, false},
                                 {8, SamplingKind::WeightedSingle, 1, false},
                                 {6, SamplingKind::WeightedReplacement, 2, false}};
  for (const auto& c : cases) {
    for (std::size_t trial = 0; trial < 20; ++trial) {
      const std::size_t d = g.pick(2, 6);
      const Loss loss = trial % 2 ? Loss::LogisticRidge : Loss::SquaredError;
      const SmoothObjective obj = random_objective(g, c.n, d, loss, 0.1);
      const SnapshotState snap = SnapshotState::at(obj, g.gauss(d));
      const Vector x = g.gauss(d);
      const EstimatorStats st = enumerate_estimator_stats(obj, snap, {c.kind, c.batch, 0}, x);
      t.check((st.mean - obj.full_gradient(x)).norm(), 1e-12);
    }
  }
  return t.finish("exhaustive E[v] = grad F(x) within 1e-12 (n = 5, 6, 8)");
}

void check_variance(Gen& g, std::vector<PropertyResult>& out) {
  Tally t("variance_bound");
  Tally at_opt("variance_at_optimum");
  // Uniform batches meet the L_Q bound when every L_i is equal.
  const EstimatorCase cases[] = {{8, SamplingKind::WeightedSingle, 1, false},
                                 {6, SamplingKind::UniformBatch, 2, true},
                                 {6, SamplingKind::UniformBatch, 1, true}};
  for (const auto& c : cases) {
    for (int model = 0; model < 2; ++model) {
      const std::size_t d = g.pick(2, 5);
      const Loss loss = model ? Loss::LogisticRidge : Loss::SquaredError;
      const SmoothObjective obj = random_objective(g, c.n, d, loss, 0.1, c.unit_rows);
      const Regularizer reg = Regularizer::l1(g.uniform(0.0, 0.1));
      const ReferenceSolution ref = reference_solution(obj, reg, 1e-12);
      const auto P = [&](const Vector& z) { return obj.value(z) + reg.value(z); };
      for (std::size_t trial = 0; trial < 50; ++trial) {
        const Vector xt = ref.x + std::pow(10.0, g.uniform(-3.0, 0.5)) * g.gauss(d);
        const Vector x = ref.x + std::pow(10.0, g.uniform(-3.0, 0.5)) * g.gauss(d);
        const EstimatorStats st = enumerate_estimator_stats(
            obj, SnapshotState::at(obj, xt), {c.kind, c.batch, 0}, x);
        const double bound =
            4.0 * obj.lipschitz_mean() * (P(x) - ref.objective + P(xt) - ref.objective);
        t.check(st.variance, bound * (1.0 + 1e-9) + 1e-15);
      }
      const EstimatorStats st0 = enumerate_estimator_stats(
          obj, SnapshotState::at(obj, ref.x), {c.kind, c.batch, 0}, ref.x);
      at_opt.check(st0.variance, 1e-20);
    }
  }
  out.push_back(t.finish("E||v - grad F||^2 <= 4 L_Q [P(x) - P* + P(x~) - P*]"));
  out.push_back(at_opt.finish("E||v - grad F||^2 <= 1e-20 at x = x~ = x*"));
}

}  // namespace

std::vector<PropertyResult> run_verify(const VerifyOptions& options) {
  Gen g(options.seed);
  std::vector<PropertyResult> out;
  out.push_back(check_secant(g, options));
  PropertyResult lower;
  out.push_back(check_upper_bound(g, options, lower));
  out.push_back(lower);
  out.push_back(check_scaled_prox(g));
  out.push_back(check_nonexpansive(g, options));
  out.push_back(check_descent(g, options));
  out.push_back(check_fixed_point(g, options));
  out.push_back(check_rate_formula());
  if (options.level == VerifyLevel::Full) {
    out.push_back(check_unbiased(g));
    check_variance(g, out);
  }
  return out;
}

int cmd_verify(const VerifyOptions& options, std::ostream& out) {
  const auto results = run_verify(options);
  bool ok = true;
  for (const auto& r : results) {
    const char* tag = r.passed ? "PASS" : (r.advisory ? "NOTE" : "FAIL");
    if (!r.passed && !r.advisory) ok = false;
    out << tag << "  " << std::left << std::setw(26) << r.name << std::right << " trials "
        << std::setw(6) << r.trials << "  violations " << std::setw(5) << r.violations
        << "  worst " << std::scientific << std::setprecision(3) << r.worst_ratio
        << std::defaultfloat << "  (" << std::fixed << std::setprecision(2) << r.seconds
        << " s)" << std::defaultfloat << "  " << r.detail << '\n';
  }
  out << (ok ? "verify: all properties hold" : "verify: FAILED") << '\n';
  return ok ? kExitOk : kExitVerify;
}

}  // namespace psqn
