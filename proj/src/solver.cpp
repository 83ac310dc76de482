#include "psqn/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace psqn {

const char* to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::ProxSQN: return "prox_sqn";
    case SolverKind::ProxSVRG: return "prox_svrg";
    case SolverKind::ProxGD: return "prox_gd";
    case SolverKind::FISTA: return "fista";
    case SolverKind::ProxNewtonFull: return "prox_newton";
  }
  return "?";
}

std::optional<SolverKind> solver_kind_from_string(const std::string& name) {
  for (SolverKind k : {SolverKind::ProxSQN, SolverKind::ProxSVRG, SolverKind::ProxGD,
                       SolverKind::FISTA, SolverKind::ProxNewtonFull}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

void validate(const SolverConfig& c, const SmoothObjective& obj) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("solver config: " + msg); };
  if (c.epochs == 0) fail("epochs must be >= 1");
  if (c.eta && !(*c.eta > 0.0 && std::isfinite(*c.eta))) fail("eta must be finite and > 0");
  if (!(c.divergence_factor > 1.0)) fail("divergence_factor must be > 1");
  if (!(c.step_decay >= 0.0)) fail("step_decay must be >= 0");
  if (c.step_decay != 0.0 && c.kind != SolverKind::ProxSVRG) {
    fail("step_decay is only available for prox_svrg");
  }
  const bool stochastic = c.kind == SolverKind::ProxSQN || c.kind == SolverKind::ProxSVRG;
  if (stochastic) {
    if (c.batch == 0) fail("batch must be >= 1");
    if (c.sampling == SamplingKind::UniformBatch && c.batch > obj.n()) {
      fail("batch exceeds n for uniform sampling");
    }
    if (c.sampling == SamplingKind::WeightedSingle && c.batch != 1) {
      fail("weighted_single sampling requires batch = 1");
    }
  }
  if (c.kind == SolverKind::ProxSQN) {
    if (c.metric_period == 0) fail("metric_period must be >= 1");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) fail("alpha must lie in (0, 1)");
    if (!(c.skip_eps >= 0.0)) fail("skip_eps must be >= 0");
    if (!c.force_identity_metric && (c.hessian_batch == 0 || c.hessian_batch > obj.n())) {
      fail("hessian_batch must lie in [1, n]");
    }
  }
  if (c.kind == SolverKind::ProxNewtonFull && obj.d() > c.dense_limit) {
    fail("prox_newton needs d <= dense_limit (" + std::to_string(c.dense_limit) + ")");
  }
}

double default_step(SolverKind kind, const SmoothObjective& obj) {
  switch (kind) {
    case SolverKind::ProxGD:
    case SolverKind::FISTA: return 1.0 / obj.lipschitz_mean();
    case SolverKind::ProxSVRG:
    case SolverKind::ProxSQN: return 0.1 / obj.lipschitz_mean();
    case SolverKind::ProxNewtonFull: return 1.0;
  }
  return 1.0;
}

namespace {

using Clock = std::chrono::steady_clock;

Vector proximal_gradient_step(const Regularizer& reg, const Vector& x, const Vector& g,
                              double eta) {
  return prox(reg, x - eta * g, eta);
}

class Recorder {
 public:
  Recorder(const SmoothObjective& obj, const Regularizer& reg, const SolverConfig& config,
           const RunOptions& options)
      : obj_(obj), reg_(reg), config_(config), options_(options), start_(Clock::now()) {
    initial_ = obj.value(Vector::Zero(static_cast<Eigen::Index>(obj.d())));
  }

  void record(std::size_t epoch, std::size_t iteration, const Vector& x,
              const RunCounters& counters) {
    TraceRecord rec;
    rec.epoch = epoch;
    rec.iteration = iteration;
    rec.objective = obj_.value(x) + reg_.value(x);
    rec.suboptimality = options_.optimum ? rec.objective - *options_.optimum
                                         : std::numeric_limits<double>::quiet_NaN();
    rec.grad_evals = counters.grad_evals;
    rec.metric_rebuilds = counters.metric_rebuilds;
    rec.elapsed_ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_).count();
    trace_.push_back(rec);
    const double limit = config_.divergence_factor * std::max(std::abs(initial_), 1e-300);
    if (!std::isfinite(rec.objective) || rec.objective > limit) {
      std::ostringstream msg;
      msg << to_string(config_.kind) << " diverged at epoch " << epoch << " (iteration "
          << iteration << "): objective " << rec.objective << " exceeds "
          << config_.divergence_factor << " x initial objective " << initial_;
      throw DivergenceError(msg.str(), trace_);
    }
  }

  void check_finite(const Vector& x, std::size_t epoch, std::size_t iteration) const {
    if (!x.allFinite()) {
      std::ostringstream msg;
      msg << to_string(config_.kind) << " produced a non-finite iterate at epoch " << epoch
          << " (iteration " << iteration << ")";
      throw DivergenceError(msg.str(), trace_);
    }
  }

  std::vector<TraceRecord> take() { return std::move(trace_); }

 private:
  const SmoothObjective& obj_;
  const Regularizer& reg_;
  const SolverConfig& config_;
  const RunOptions& options_;
  Clock::time_point start_;
  double initial_ = 0.0;
  std::vector<TraceRecord> trace_;
};

// Algorithm 1. ProxSVRG is the same loop with H = I throughout.
RunResult run_variance_reduced(const SmoothObjective& obj, const Regularizer& reg,
                               const SolverConfig& config, const RunOptions& options) {
  const auto d = static_cast<Eigen::Index>(obj.d());
  const std::size_t m = config.inner_loop == 0 ? 2 * obj.n() : config.inner_loop;
  const double eta = config.eta.value_or(default_step(config.kind, obj));
  const bool build_metrics =
      config.kind == SolverKind::ProxSQN && !config.force_identity_metric;
  const std::size_t period = config.metric_period;

  RunResult result;
  RunCounters& counters = result.counters;
  Recorder recorder(obj, reg, config, options);
  Rng rng(config.seed);
  const BatchSampler sampler(obj, {config.sampling, config.batch, config.seed});

  Metric metric = Metric::identity(obj.d());
  bool have_metric = false;
  ScaledProxProblem prob;
  Vector window_sum = Vector::Zero(d);
  std::optional<Vector> previous_average;

  Vector x_tilde = Vector::Zero(d);
  std::size_t t = 0;
  for (std::size_t s = 1; s <= config.epochs; ++s) {
    const SnapshotState snapshot = SnapshotState::at(obj, x_tilde);
    counters.grad_evals += obj.n();
    Vector x = x_tilde;
    Vector iterate_sum = Vector::Zero(d);

    for (std::size_t j = 0; j < m; ++j) {
      ++t;
      const Vector v = vr_gradient(obj, snapshot, sampler.draw(rng), x, &counters.grad_evals);
      const bool scaled = have_metric && t >= 2 * period;
      if (scaled) {
        prob.x = x - eta * metric.apply_inverse(v);
        x = scaled_prox(reg, prob);
        ++counters.scaled_prox_calls;
        if (counters.first_scaled_iteration == 0) counters.first_scaled_iteration = t;
      } else {
        double step = eta;
        if (config.step_decay > 0.0) step = eta / (1.0 + config.step_decay * static_cast<double>(t - 1));
        x = proximal_gradient_step(reg, x, v, step);
      }
      recorder.check_finite(x, s, t);
      iterate_sum += x;
      if (options.on_iterate) options.on_iterate({s, t, x, scaled});

      if (build_metrics) {
        window_sum += x;
        if (t % period == 0) {
          Vector average = window_sum / static_cast<double>(period);
          window_sum.setZero();
          if (previous_average) {
            CurvaturePair pair;
            pair.s = average - *previous_average;
            const std::vector<std::size_t> hess_batch =
                sample_without_replacement(rng, obj.n(), config.hessian_batch);
            pair.y = obj.hessian_vec(hess_batch, average, pair.s);
            counters.grad_evals += hess_batch.size();
            if (pair.y.squaredNorm() > 0.0 && pair.s.dot(pair.y) > 0.0) {
              Metric next = Metric::build(pair, config.alpha, config.skip_eps);
              if (options.on_metric) options.on_metric(next);
              if (!next.rank_one_active()) ++counters.skipped_updates;
              counters.max_secant_error = std::max(counters.max_secant_error, next.secant_error());
              metric = std::move(next);
              prob = make_prox_problem(metric, eta, Vector::Zero(d));
              have_metric = true;
              ++counters.metric_rebuilds;
              result.metrics.push_back(metric);
            } else {
              ++counters.rejected_pairs;
            }
          }
          previous_average = std::move(average);
        }
      }
    }
    x_tilde = iterate_sum / static_cast<double>(m);
    recorder.record(s, t, x_tilde, counters);
  }
  result.x = std::move(x_tilde);
  result.trace = recorder.take();
  return result;
}

RunResult run_proximal_gradient(const SmoothObjective& obj, const Regularizer& reg,
                                const SolverConfig& config, const RunOptions& options) {
  const double eta = config.eta.value_or(default_step(config.kind, obj));
  RunResult result;
  Recorder recorder(obj, reg, config, options);
  Vector x = Vector::Zero(static_cast<Eigen::Index>(obj.d()));
  for (std::size_t k = 1; k <= config.epochs; ++k) {
    const Vector g = obj.full_gradient(x);
    result.counters.grad_evals += obj.n();
    x = proximal_gradient_step(reg, x, g, eta);
    recorder.check_finite(x, k, k);
    if (options.on_iterate) options.on_iterate({k, k, x, false});
    recorder.record(k, k, x, result.counters);
  }
  result.x = std::move(x);
  result.trace = recorder.take();
  return result;
}

RunResult run_fista(const SmoothObjective& obj, const Regularizer& reg,
                    const SolverConfig& config, const RunOptions& options) {
  const double eta = config.eta.value_or(default_step(config.kind, obj));
  RunResult result;
  Recorder recorder(obj, reg, config, options);
  Vector x = Vector::Zero(static_cast<Eigen::Index>(obj.d()));
  Vector y = x;
  double t = 1.0;
  for (std::size_t k = 1; k <= config.epochs; ++k) {
    const Vector g = obj.full_gradient(y);
    result.counters.grad_evals += obj.n();
    Vector next = proximal_gradient_step(reg, y, g, eta);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / t_next) * (next - x);
    x = std::move(next);
    t = t_next;
    recorder.check_finite(x, k, k);
    if (options.on_iterate) options.on_iterate({k, k, x, false});
    recorder.record(k, k, x, result.counters);
  }
  result.x = std::move(x);
  result.trace = recorder.take();
  return result;
}

RunResult run_newton(const SmoothObjective& obj, const Regularizer& reg,
                     const SolverConfig& config, const RunOptions& options) {
  const double eta = config.eta.value_or(default_step(config.kind, obj));
  RunResult result;
  Recorder recorder(obj, reg, config, options);
  Vector x = Vector::Zero(static_cast<Eigen::Index>(obj.d()));
  for (std::size_t k = 1; k <= config.epochs; ++k) {
    const Vector g = obj.full_gradient(x);
    const Matrix h = obj.full_hessian(x);
    result.counters.grad_evals += 2 * obj.n();
    const Eigen::LDLT<Matrix> ldlt(h);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
      throw std::runtime_error("prox_newton: Hessian is not positive definite");
    }
    const Vector z = x - eta * ldlt.solve(g);
    x = dense_scaled_prox(reg, h, z, eta);
    recorder.check_finite(x, k, k);
    if (options.on_iterate) options.on_iterate({k, k, x, true});
    recorder.record(k, k, x, result.counters);
  }
  result.x = std::move(x);
  result.trace = recorder.take();
  return result;
}

}  // namespace

RunResult run(const SmoothObjective& obj, const Regularizer& reg, const SolverConfig& config,
              const RunOptions& options) {
  validate(config, obj);
  switch (config.kind) {
    case SolverKind::ProxSQN:
    case SolverKind::ProxSVRG: return run_variance_reduced(obj, reg, config, options);
    case SolverKind::ProxGD: return run_proximal_gradient(obj, reg, config, options);
    case SolverKind::FISTA: return run_fista(obj, reg, config, options);
    case SolverKind::ProxNewtonFull: return run_newton(obj, reg, config, options);
  }
  throw std::invalid_argument("run: unknown solver kind");
}

Vector proximal_quasi_newton_step(const Regularizer& reg, const Metric& metric,
                                  const Vector& x, const Vector& v, double eta) {
  if (metric.is_identity()) return proximal_gradient_step(reg, x, v, eta);
  ScaledProxProblem prob = make_prox_problem(metric, eta, x - eta * metric.apply_inverse(v));
  return scaled_prox(reg, prob);
}

RateReport rate_plan(const MetricBounds& bounds, double lipschitz_mean, double mu,
                     std::size_t inner_loop, double eta) {
  const double gl = bounds.gamma_lo;
  const double gh = bounds.gamma_hi;
  if (!(gl > 0.0 && gh >= gl && lipschitz_mean > 0.0 && mu > 0.0 && inner_loop > 0 &&
        eta > 0.0)) {
    throw std::invalid_argument("rate_plan: inputs must be positive (and gamma <= Gamma)");
  }
  const double g2 = gl * gl;
  auto rho_at = [&](double m) {
    const double num = gh * g2 + 4.0 * eta * eta * mu * gh * lipschitz_mean * (m + 1.0);
    const double den = (eta * g2 - 4.0 * eta * eta * gh * lipschitz_mean) * mu * m;
    return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
  };

  RateReport out;
  out.eta_max = g2 / (8.0 * gh * lipschitz_mean);
  out.rho = rho_at(static_cast<double>(inner_loop));
  out.feasible = eta < out.eta_max && out.rho < 1.0;
  if (eta < out.eta_max) {
    // rho decreases in m towards 4 eta Gamma L_Q / (gamma^2 - 4 eta Gamma L_Q) < 1.
    std::size_t hi = 1;
    while (!(rho_at(static_cast<double>(hi)) < 1.0)) {
      if (hi > (std::numeric_limits<std::size_t>::max() >> 2)) return out;
      hi *= 2;
    }
    std::size_t lo = hi / 2;  // rho(lo) >= 1 unless lo == 0
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (rho_at(static_cast<double>(mid)) < 1.0) hi = mid; else lo = mid;
    }
    out.min_inner_loop = hi;
  }
  return out;
}

double plan_step(const MetricBounds& bounds, double lipschitz_mean, double mu,
                 std::size_t inner_loop) {
  const double gl = bounds.gamma_lo;
  const double gh = bounds.gamma_hi;
  if (!(gl > 0.0 && gh >= gl && lipschitz_mean > 0.0 && mu > 0.0 && inner_loop > 0)) {
    throw std::invalid_argument("plan_step: inputs must be positive (and gamma <= Gamma)");
  }
  // With t = 4 eta Gamma L_Q / gamma^2, rho = (K + B t^2) / (t (1 - t)) where
  // K = 4 Gamma^2 L_Q / (gamma^2 mu m) and B = (m + 1) / m. The minimizer is the
  // positive root of B t^2 + 2 K t - K = 0, always below t = 1/2 (eta_max).
  const double m = static_cast<double>(inner_loop);
  const double k = 4.0 * gh * gh * lipschitz_mean / (gl * gl * mu * m);
  const double b = (m + 1.0) / m;
  const double t = k / (k + std::sqrt(k * k + b * k));
  return t * gl * gl / (4.0 * gh * lipschitz_mean);
}

MetricBounds estimate_metric_bounds(const SmoothObjective& obj, const Regularizer& reg,
                                    const SolverConfig& config, std::size_t pilot_epochs) {
  SolverConfig pilot = config;
  pilot.kind = SolverKind::ProxSVRG;
  pilot.epochs = pilot_epochs;
  pilot.eta = default_step(SolverKind::ProxSVRG, obj);
  pilot.step_decay = 0.0;
  validate(pilot, obj);
  if (config.metric_period == 0 || config.hessian_batch == 0 ||
      config.hessian_batch > obj.n() || !(config.alpha > 0.0 && config.alpha < 1.0)) {
    throw std::invalid_argument("estimate_metric_bounds: invalid metric parameters");
  }

  const auto d = static_cast<Eigen::Index>(obj.d());
  const std::size_t period = config.metric_period;
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Vector window_sum = Vector::Zero(d);
  std::optional<Vector> previous;
  MetricBounds out;
  out.gamma_lo = std::numeric_limits<double>::infinity();
  out.gamma_hi = 0.0;
  std::size_t built = 0;

  RunOptions opts;
  opts.on_iterate = [&](const IterateEvent& ev) {
    window_sum += ev.iterate;
    if (ev.iteration % period != 0) return;
    Vector average = window_sum / static_cast<double>(period);
    window_sum.setZero();
    if (previous) {
      CurvaturePair pair{average - *previous, Vector()};
      pair.y = obj.hessian_vec(sample_without_replacement(rng, obj.n(), config.hessian_batch),
                               average, pair.s);
      if (pair.y.squaredNorm() > 0.0 && pair.s.dot(pair.y) > 0.0) {
        const MetricBounds b = observed_bounds(Metric::build(pair, config.alpha, config.skip_eps));
        out.gamma_lo = std::min(out.gamma_lo, b.gamma_lo);
        out.gamma_hi = std::max(out.gamma_hi, b.gamma_hi);
        ++built;
      }
    }
    previous = std::move(average);
  };
  run(obj, reg, pilot, opts);
  if (built == 0) {
    throw std::runtime_error("estimate_metric_bounds: pilot produced no curvature pairs");
  }
  out.log_gamma_lo = std::log(out.gamma_lo);
  return out;
}

StepPlan plan_auto_step(const SmoothObjective& obj, const Regularizer& reg,
                        const SolverConfig& config) {
  if (config.kind != SolverKind::ProxSQN && config.kind != SolverKind::ProxSVRG) {
    throw std::invalid_argument("plan_auto_step: only prox_sqn and prox_svrg plan their step");
  }
  if (!(obj.strong_convexity() > 0.0)) {
    throw std::invalid_argument("plan_auto_step: the rate plan needs ridge > 0");
  }
  const std::size_t m = config.inner_loop == 0 ? 2 * obj.n() : config.inner_loop;
  StepPlan plan;
  if (config.kind == SolverKind::ProxSQN && !config.force_identity_metric) {
    plan.bounds = estimate_metric_bounds(obj, reg, config);
  } else {
    plan.bounds = observed_bounds(Metric::identity(obj.d()));
  }
  plan.eta = plan_step(plan.bounds, obj.lipschitz_mean(), obj.strong_convexity(), m);
  plan.report = rate_plan(plan.bounds, obj.lipschitz_mean(), obj.strong_convexity(), m, plan.eta);
  return plan;
}

Vector dense_scaled_prox(const Regularizer& reg, const Matrix& hessian, const Vector& z,
                         double eta, double tol, std::size_t max_sweeps) {
  if (reg.kind == RegularizerKind::Zero) return z;
  const Eigen::Index d = z.size();
  Vector y = z;
  Vector r = Vector::Zero(d);  // H (y - z)
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double largest = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double hjj = hessian(j, j);
      const double target = y[j] - r[j] / hjj;
      const double next = soft_threshold(target, eta / hjj, reg.lambda1);
      const double delta = next - y[j];
      if (delta != 0.0) {
        y[j] = next;
        r.noalias() += delta * hessian.col(j);
        largest = std::max(largest, std::abs(delta));
      }
    }
    if (largest <= tol * (1.0 + y.lpNorm<Eigen::Infinity>())) return y;
  }
  throw std::runtime_error("dense_scaled_prox: coordinate descent did not converge");
}

}  // namespace psqn
