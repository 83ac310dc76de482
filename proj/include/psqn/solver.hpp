#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psqn/metric.hpp"
#include "psqn/model.hpp"
#include "psqn/prox.hpp"
#include "psqn/sampler.hpp"

namespace psqn {

enum class SolverKind { ProxSQN, ProxSVRG, ProxGD, FISTA, ProxNewtonFull };

const char* to_string(SolverKind kind);
std::optional<SolverKind> solver_kind_from_string(const std::string& name);

/// Hyperparameters. For ProxGD, FISTA and ProxNewtonFull one "epoch" is one
/// full-gradient iteration.
struct SolverConfig {
  SolverKind kind = SolverKind::ProxSQN;
  std::size_t epochs = 30;
  /// Inner iterations m per epoch; 0 selects 2n.
  std::size_t inner_loop = 0;
  /// Step size. Unset picks a per-solver default (see default_step).
  std::optional<double> eta;
  std::size_t batch = 1;
  std::size_t hessian_batch = 10;
  /// Metric period Z.
  std::size_t metric_period = 10;
  double alpha = 0.5;
  double skip_eps = 1e-8;
  SamplingKind sampling = SamplingKind::UniformBatch;
  std::uint64_t seed = 0;
  /// Keep H = I throughout (no curvature pairs are drawn).
  bool force_identity_metric = false;
  /// ProxSVRG only: eta_k = eta / (1 + decay * k) on the global counter.
  double step_decay = 0.0;
  /// Abort once P(x) exceeds divergence_factor * P(x_0).
  double divergence_factor = 1e3;
  /// ProxNewtonFull refuses d above this.
  std::size_t dense_limit = 256;

  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

/// Throws std::invalid_argument describing the first violated constraint.
void validate(const SolverConfig& config, const SmoothObjective& obj);

/// 1/L_Q for ProxGD, FISTA and ProxSVRG/ProxSQN fallbacks, 1 for ProxNewtonFull.
double default_step(SolverKind kind, const SmoothObjective& obj);

struct TraceRecord {
  std::size_t epoch = 0;
  /// Global iteration counter after this epoch.
  std::size_t iteration = 0;
  double objective = 0.0;
  /// P(x) - P* when P* is known, NaN otherwise.
  double suboptimality = 0.0;
  std::size_t grad_evals = 0;
  std::size_t metric_rebuilds = 0;
  std::int64_t elapsed_ns = 0;
};

/// Per-step notification. `iterate` is x_{k+1} after the update of global
/// iteration k (1-based).
struct IterateEvent {
  std::size_t epoch;
  std::size_t iteration;
  const Vector& iterate;
  bool scaled_step;
};

struct RunOptions {
  /// P* for suboptimality columns.
  std::optional<double> optimum;
  std::function<void(const IterateEvent&)> on_iterate;
  /// Called with every freshly built metric; may modify it (fault injection).
  std::function<void(Metric&)> on_metric;
};

struct RunCounters {
  std::size_t grad_evals = 0;
  std::size_t metric_rebuilds = 0;
  std::size_t skipped_updates = 0;
  /// Curvature pairs rejected before Algorithm-2 construction (y = 0 or s'y <= 0).
  std::size_t rejected_pairs = 0;
  std::size_t scaled_prox_calls = 0;
  /// Global iteration of the first scaled-prox step, 0 if none.
  std::size_t first_scaled_iteration = 0;
  double max_secant_error = 0.0;
};

struct RunResult {
  Vector x;
  std::vector<TraceRecord> trace;
  RunCounters counters;
  std::vector<Metric> metrics;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<TraceRecord> partial)
      : std::runtime_error(what), trace(std::move(partial)) {}
  std::vector<TraceRecord> trace;
};

/// Runs the configured solver from x_0 = 0.
RunResult run(const SmoothObjective& obj, const Regularizer& reg, const SolverConfig& config,
              const RunOptions& options = {});

/// One update x+ = prox^H_{eta R}(x - eta H^{-1} v). For the identity metric
/// this is the plain proximal gradient step.
Vector proximal_quasi_newton_step(const Regularizer& reg, const Metric& metric,
                                  const Vector& x, const Vector& v, double eta);

/// Linear-rate bookkeeping for a constant step size.
struct RateReport {
  double rho = 0.0;
  /// gamma^2 / (8 Gamma L_Q)
  double eta_max = 0.0;
  bool feasible = false;
  /// Smallest m with rho < 1 at this eta, when one exists.
  std::optional<std::size_t> min_inner_loop;
};

/// rho = (Gamma gamma^2 + 4 eta^2 mu Gamma L_Q (m+1)) /
///       ((eta gamma^2 - 4 eta^2 Gamma L_Q) mu m)
RateReport rate_plan(const MetricBounds& bounds, double lipschitz_mean, double mu,
                     std::size_t inner_loop, double eta);

/// The step in (0, eta_max) minimizing rho for the given m; closed form of the
/// stationarity condition of rho in eta.
double plan_step(const MetricBounds& bounds, double lipschitz_mean, double mu,
                 std::size_t inner_loop);

/// Metric bounds measured on curvature pairs sampled the way Algorithm 1
/// samples them: `pilot_epochs` of warm-up at a plain proximal-SVRG step
/// produce averaged iterates, from which metrics are built and their exact
/// extreme eigenvalues collected.
MetricBounds estimate_metric_bounds(const SmoothObjective& obj, const Regularizer& reg,
                                    const SolverConfig& config, std::size_t pilot_epochs = 1);

/// The step behind `eta = auto`.
struct StepPlan {
  double eta = 0.0;
  MetricBounds bounds;
  RateReport report;
};

/// plan_step on estimated metric bounds (identity bounds for ProxSVRG), with
/// the rate_plan report at the chosen step. Needs ridge > 0.
StepPlan plan_auto_step(const SmoothObjective& obj, const Regularizer& reg,
                        const SolverConfig& config);

struct ReferenceSolution {
  Vector x;
  double objective = 0.0;
  /// ||G(x)||, the gradient-mapping norm at step 1/L.
  double residual = 0.0;
  std::size_t iterations = 0;
};

/// Accelerated proximal gradient with adaptive restart, run until the
/// gradient-mapping norm drops to `tol`. Throws std::runtime_error when the
/// iteration cap is reached first.
ReferenceSolution reference_solution(const SmoothObjective& obj, const Regularizer& reg,
                                     double tol = 1e-12, std::size_t max_iterations = 1'000'000);

/// argmin_y eta R(y) + 1/2 ||y - z||_H^2 for a dense SPD H, by exact cyclic
/// coordinate descent. Used by ProxNewtonFull.
Vector dense_scaled_prox(const Regularizer& reg, const Matrix& hessian, const Vector& z,
                         double eta, double tol = 1e-15, std::size_t max_sweeps = 100000);

}  // namespace psqn
