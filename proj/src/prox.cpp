#include "psqn/prox.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace psqn {

Regularizer Regularizer::l1(double lambda1) {
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) {
    throw std::invalid_argument("regularizer: lambda1 must be finite and >= 0");
  }
  return {RegularizerKind::L1, lambda1};
}

double Regularizer::value(const Vector& x) const {
  if (kind == RegularizerKind::Zero) return 0.0;
  return lambda1 * x.lpNorm<1>();
}

Vector prox(const Regularizer& reg, const Vector& x, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("prox: eta must be > 0");
  if (reg.kind == RegularizerKind::Zero) return x;
  Vector y(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    y[j] = soft_threshold(x[j], eta, reg.lambda1);
  }
  return y;
}

void ScaledProxProblem::validate() const {
  if (sign != 1 && sign != -1) {
    throw std::invalid_argument("scaled_prox: sign must be +1 or -1");
  }
  if (!(eta > 0.0)) throw std::invalid_argument("scaled_prox: eta must be > 0");
  if (diag.size() != x.size() || rank1.size() != x.size()) {
    throw std::invalid_argument("scaled_prox: dimension mismatch");
  }
  if (!(diag.array() > 0.0).all() || !diag.allFinite()) {
    throw std::invalid_argument("scaled_prox: diagonal entries must be positive");
  }
  if (sign == -1) {
    const double q = (rank1.array().square() / diag.array()).sum();
    if (!(q < 1.0)) {
      throw std::invalid_argument(
          "scaled_prox: D - uu' is not positive definite (u'D^{-1}u = " +
          std::to_string(q) + ")");
    }
  }
}

Vector ScaledProxProblem::apply_metric(const Vector& v) const {
  Vector out = diag.cwiseProduct(v);
  out.noalias() += (static_cast<double>(sign) * rank1.dot(v)) * rank1;
  return out;
}

Matrix ScaledProxProblem::dense_metric() const {
  Matrix h = static_cast<double>(sign) * rank1 * rank1.transpose();
  h.diagonal() += diag;
  return h;
}

namespace {

// y(beta) = prox^D_{eta R}(x - beta D^{-1} u), written into y.
void diagonal_prox_shifted(const Regularizer& reg, const ScaledProxProblem& prob,
                           double beta, Vector& y) {
  const double lambda = reg.weight();
  for (Eigen::Index j = 0; j < prob.x.size(); ++j) {
    const double z = prob.x[j] - beta * prob.rank1[j] / prob.diag[j];
    y[j] = soft_threshold(z, prob.eta / prob.diag[j], lambda);
  }
}

double root_function(const Regularizer& reg, const ScaledProxProblem& prob, double beta,
                     Vector& scratch) {
  diagonal_prox_shifted(reg, prob, beta, scratch);
  return prob.rank1.dot(prob.x - scratch) + static_cast<double>(prob.sign) * beta;
}

}  // namespace

double splitting_root_function(const Regularizer& reg, const ScaledProxProblem& prob,
                               double beta) {
  Vector scratch(prob.x.size());
  return root_function(reg, prob, beta, scratch);
}

ScaledProxResult scaled_prox_detailed(const Regularizer& reg, const ScaledProxProblem& prob,
                                      const ScaledProxOptions& opts) {
  prob.validate();
  ScaledProxResult out;
  out.y.resize(prob.x.size());

  if (reg.kind == RegularizerKind::Zero) {
    out.y = prob.x;
    return out;
  }
  if (prob.rank1.norm() < opts.degenerate_rank1) {
    diagonal_prox_shifted(reg, prob, 0.0, out.y);
    return out;
  }

  // Orient so that sign * g is increasing in beta.
  const double orient = static_cast<double>(prob.sign);
  Vector scratch(prob.x.size());
  auto g = [&](double beta) { return root_function(reg, prob, beta, scratch); };

  const double half = prob.rank1.norm() * prob.x.norm() + 1.0;
  double lo = -half;
  double hi = half;
  double g_lo = g(lo);
  double g_hi = g(hi);
  int doublings = 0;
  while (orient * g_lo > 0.0) {
    if (++doublings > opts.max_doublings) {
      throw std::runtime_error("scaled_prox: could not bracket the splitting root");
    }
    const double width = hi - lo;
    hi = lo;
    g_hi = g_lo;
    lo -= 2.0 * width;
    g_lo = g(lo);
  }
  while (orient * g_hi < 0.0) {
    if (++doublings > opts.max_doublings) {
      throw std::runtime_error("scaled_prox: could not bracket the splitting root");
    }
    const double width = hi - lo;
    lo = hi;
    g_lo = g_hi;
    hi += 2.0 * width;
    g_hi = g(hi);
  }

  double best = std::abs(g_lo) <= std::abs(g_hi) ? lo : hi;
  double best_g = std::min(std::abs(g_lo), std::abs(g_hi));
  while (best_g > 0.0 &&
         hi - lo > opts.width_tol * (1.0 + std::max(std::abs(lo), std::abs(hi))) &&
         out.bisections < opts.max_bisections) {
    const double mid = 0.5 * (lo + hi);
    const double g_mid = g(mid);
    ++out.bisections;
    if (std::abs(g_mid) < best_g) {
      best = mid;
      best_g = std::abs(g_mid);
    }
    if (g_mid == 0.0) break;
    if (orient * g_mid < 0.0) {
      lo = mid;
      g_lo = g_mid;
    } else {
      hi = mid;
      g_hi = g_mid;
    }
  }

  // One secant step across the final bracket; exact when the bracket lies
  // inside a single linear piece of g.
  if (best_g > 0.0 && g_hi != g_lo) {
    double beta = lo - g_lo * (hi - lo) / (g_hi - g_lo);
    beta = std::clamp(beta, lo, hi);
    const double g_beta = std::abs(g(beta));
    if (g_beta < best_g) {
      best = beta;
      best_g = g_beta;
    }
  }

  out.beta = best;
  out.residual = best_g;
  diagonal_prox_shifted(reg, prob, best, out.y);
  return out;
}

Vector scaled_prox(const Regularizer& reg, const ScaledProxProblem& prob) {
  return scaled_prox_detailed(reg, prob).y;
}

double scaled_prox_optimality_violation(const Regularizer& reg,
                                        const ScaledProxProblem& prob, const Vector& y) {
  const Vector r = prob.apply_metric(prob.x - y) / prob.eta;
  const double lambda = reg.weight();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    double v;
    if (y[j] > 0.0) {
      v = std::abs(r[j] - lambda);
    } else if (y[j] < 0.0) {
      v = std::abs(r[j] + lambda);
    } else {
      v = std::max(std::abs(r[j]) - lambda, 0.0);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

Vector subproblem_oracle(const Regularizer& reg, const ScaledProxProblem& prob,
                         const SubproblemOracleOptions& opts) {
  prob.validate();
  if (prob.x.size() > 512) {
    throw std::invalid_argument("subproblem_oracle: d > 512");
  }
  if (reg.kind == RegularizerKind::Zero) return prob.x;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(prob.dense_metric(), Eigen::EigenvaluesOnly);
  const double sigma_min = eig.eigenvalues().minCoeff();
  const double sigma_max = eig.eigenvalues().maxCoeff();
  if (!(sigma_min > 0.0)) {
    throw std::invalid_argument("subproblem_oracle: metric not positive definite");
  }
  const double step = 1.0 / sigma_max;
  const double stop = opts.tol * sigma_min / sigma_max;

  Vector y = prob.x;
  Vector next(y.size());
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    const Vector grad = prob.apply_metric(y - prob.x);
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      next[j] = soft_threshold(y[j] - step * grad[j], step * prob.eta, reg.lambda1);
    }
    const double change = (next - y).norm();
    y.swap(next);
    if (change <= stop) return y;
  }
  throw std::runtime_error("subproblem_oracle: no convergence within " +
                           std::to_string(opts.max_iterations) + " iterations");
}

}  // namespace psqn
