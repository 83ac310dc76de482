#pragma once

#include <cstddef>

#include "psqn/model.hpp"
#include "psqn/prox.hpp"

namespace psqn {

/// Displacement of averaged iterates and the batch-Hessian action on it.
struct CurvaturePair {
  Vector s;
  Vector y;
};

/// Why a rank-one correction was dropped.
enum class SkipReason { None, Condition, NonPositiveDenominator };

/// Inverse-Hessian approximation H^{-1} = alpha tau I + u u'.
///
/// Built from one curvature pair with tau = s'y / ||y||^2 and
/// u = (s - alpha tau y) / sqrt((s - alpha tau y)'y), so that H^{-1} y = s.
/// The correction is dropped (u = 0) when
///   (s - alpha tau y)'y <= eps ||y|| ||s - tau y||.
class Metric {
 public:
  static Metric build(const CurvaturePair& pair, double alpha, double eps = 1e-8);
  /// Assemble from raw parts; used by tests and fault injection.
  static Metric from_parts(double tau, double alpha, Vector u);
  /// H = I, the metric used before the first curvature pair exists.
  static Metric identity(std::size_t d);

  double tau() const { return tau_; }
  double alpha() const { return alpha_; }
  const Vector& u() const { return u_; }
  std::size_t dim() const { return static_cast<std::size_t>(u_.size()); }
  bool is_identity() const { return identity_; }
  bool rank_one_active() const { return active_; }
  SkipReason skip_reason() const { return skip_; }
  /// ||H^{-1} y - s|| for the construction pair (0 when skipped).
  double secant_error() const { return secant_error_; }

  /// H^{-1} v = alpha tau v + u (u'v) in O(d).
  Vector apply_inverse(const Vector& v) const;

  /// H as diagonal-minus-rank-one, by Sherman-Morrison:
  ///   H = I/(alpha tau) - u u' / (alpha tau (alpha tau + u'u)).
  struct Splitting {
    Vector diag;
    Vector rank1;
    int sign = -1;
  };
  Splitting splitting() const;

  Matrix dense_inverse() const;
  Matrix dense() const;

 private:
  double tau_ = 1.0;
  double alpha_ = 1.0;
  Vector u_;
  bool identity_ = false;
  bool active_ = false;
  SkipReason skip_ = SkipReason::None;
  double secant_error_ = 0.0;
};

/// Scaled-prox problem for the step x+ = prox^H_{eta R}(point).
ScaledProxProblem make_prox_problem(const Metric& metric, double eta, Vector point);

/// Eigenvalue bounds gamma I <= H <= Gamma I.
struct MetricBounds {
  double gamma_lo = 0.0;
  double gamma_hi = 0.0;
  /// log(gamma_lo), kept separately because gamma_lo underflows for large d.
  double log_gamma_lo = 0.0;
  /// gamma_lo not representable as a positive double.
  bool degenerate = false;
};

/// Worst-case bounds over every metric built from a batch Hessian with
/// spectrum in [lambda, Lambda]:
///   Gamma = d Lambda / alpha
///   gamma = [alpha(alpha-2) lambda^{d+1} + alpha(1-alpha) lambda^d Lambda
///            + Lambda^2 lambda^{d-1}] / [d^{d-1} Lambda^d lambda^2 (1-alpha)]
/// gamma is evaluated in log space when d > 30.
MetricBounds theorem1_bounds(const BatchHessianSpectrum& spectrum, double alpha,
                             std::size_t d);

/// Extreme eigenvalues of the assembled H, in closed form: H has eigenvalue
/// 1/(alpha tau) with multiplicity d-1 and 1/(alpha tau + u'u) along u.
MetricBounds observed_bounds(const Metric& metric);

}  // namespace psqn
