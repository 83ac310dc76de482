#pragma once

#include <cstddef>

#include "psqn/model.hpp"

namespace psqn {

enum class RegularizerKind { Zero, L1 };

/// R(x) = lambda1 * ||x||_1, or R = 0.
struct Regularizer {
  RegularizerKind kind = RegularizerKind::Zero;
  double lambda1 = 0.0;

  static Regularizer zero() { return {}; }
  static Regularizer l1(double lambda1);

  /// Effective weight; Zero behaves like L1 with weight 0.
  double weight() const { return kind == RegularizerKind::L1 ? lambda1 : 0.0; }
  double value(const Vector& x) const;

  friend bool operator==(const Regularizer&, const Regularizer&) = default;
};

/// argmin_y eta * R(y) + 1/2 ||y - x||^2
Vector prox(const Regularizer& reg, const Vector& x, double eta);

/// Problem data for argmin_y eta * R(y) + 1/2 ||y - x||_H^2 with
/// H = diag(diag) + sign * rank1 rank1'.
struct ScaledProxProblem {
  Vector diag;
  Vector rank1;
  int sign = 1;
  double eta = 1.0;
  Vector x;

  /// Throws std::invalid_argument unless diag > 0, sign = +-1, eta > 0,
  /// dimensions agree and (for sign = -1) rank1' D^{-1} rank1 < 1.
  void validate() const;
  /// H v in O(d).
  Vector apply_metric(const Vector& v) const;
  Matrix dense_metric() const;
};

struct ScaledProxOptions {
  /// Bisection stops once the bracket is narrower than width_tol * (1 + |bracket|).
  double width_tol = 1e-13;
  int max_doublings = 60;
  int max_bisections = 400;
  /// ||rank1|| below this is treated as zero.
  double degenerate_rank1 = 1e-14;
};

struct ScaledProxResult {
  Vector y;
  /// Root of the scalar splitting equation (0 when no rank-one term).
  double beta = 0.0;
  /// |g(beta)| at the returned root.
  double residual = 0.0;
  int bisections = 0;
};

/// Scaled proximal mapping via the diagonal-plus-rank-one splitting.
///
/// With y(beta) = prox^D_{eta R}(x - beta D^{-1} u), the minimizer is
/// y(beta0) where beta0 is the unique root of
///   g(beta) = u'(x - y(beta)) + sign * beta.
/// g is strictly increasing for sign = +1 and strictly decreasing for
/// sign = -1 under the positive-definiteness condition, so bracketing plus
/// bisection always converges.
ScaledProxResult scaled_prox_detailed(const Regularizer& reg, const ScaledProxProblem& prob,
                                      const ScaledProxOptions& opts = {});
Vector scaled_prox(const Regularizer& reg, const ScaledProxProblem& prob);

/// The scalar splitting function g(beta) above.
double splitting_root_function(const Regularizer& reg, const ScaledProxProblem& prob,
                               double beta);

/// Largest violation of the subproblem optimality condition at y, measured on
/// r = H (x - y) / eta: |r_j - lambda1 sign(y_j)| for y_j != 0 and
/// max(|r_j| - lambda1, 0) for y_j = 0.
double scaled_prox_optimality_violation(const Regularizer& reg,
                                        const ScaledProxProblem& prob, const Vector& y);

struct SubproblemOracleOptions {
  double tol = 1e-10;
  std::size_t max_iterations = 2'000'000;
};

/// Independent solver for the same subproblem: plain proximal gradient on the
/// strongly convex quadratic with step 1/sigma_max(H), eigen-extremes computed
/// densely. Stops when the iterate change drops below tol * sigma_min/sigma_max,
/// which bounds the distance to the minimizer by tol. Test and verification use
/// only; d <= 512.
Vector subproblem_oracle(const Regularizer& reg, const ScaledProxProblem& prob,
                         const SubproblemOracleOptions& opts = {});

/// sign(z) max(|z| - step * lambda, 0)
inline double soft_threshold(double z, double step, double lambda) {
  const double t = step * lambda;
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace psqn
