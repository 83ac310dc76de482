#include "psqn/metric.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace psqn {

Metric Metric::build(const CurvaturePair& pair, double alpha, double eps) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("build_metric: alpha must lie in (0, 1)");
  }
  if (!(eps >= 0.0)) throw std::invalid_argument("build_metric: eps must be >= 0");
  if (pair.s.size() != pair.y.size()) {
    throw std::invalid_argument("build_metric: s and y differ in dimension");
  }
  const double yy = pair.y.squaredNorm();
  if (!(yy > 0.0)) throw std::invalid_argument("build_metric: y = 0");
  const double sy = pair.s.dot(pair.y);
  const double tau = sy / yy;
  if (!(tau > 0.0)) {
    throw std::domain_error("build_metric: non-positive curvature s'y <= 0");
  }

  Metric m;
  m.tau_ = tau;
  m.alpha_ = alpha;
  m.u_ = Vector::Zero(pair.s.size());

  const double at = alpha * tau;
  const Vector w = pair.s - at * pair.y;
  const double denom = w.dot(pair.y);
  const double rhs = eps * std::sqrt(yy) * (pair.s - tau * pair.y).norm();
  if (denom <= rhs) {
    m.skip_ = SkipReason::Condition;
    return m;
  }
  if (!(denom > 0.0)) {
    // rhs >= 0, so this only catches NaN input; keeps the sqrt real.
    m.skip_ = SkipReason::NonPositiveDenominator;
    return m;
  }
  m.u_ = w / std::sqrt(denom);
  m.active_ = true;
  m.secant_error_ = (m.apply_inverse(pair.y) - pair.s).norm();
  return m;
}

Metric Metric::from_parts(double tau, double alpha, Vector u) {
  if (!(tau > 0.0)) throw std::invalid_argument("metric: tau must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("metric: alpha must lie in (0, 1)");
  }
  Metric m;
  m.tau_ = tau;
  m.alpha_ = alpha;
  m.active_ = u.squaredNorm() > 0.0;
  m.u_ = std::move(u);
  return m;
}

Metric Metric::identity(std::size_t d) {
  Metric m;
  m.identity_ = true;
  m.u_ = Vector::Zero(static_cast<Eigen::Index>(d));
  return m;
}

Vector Metric::apply_inverse(const Vector& v) const {
  if (v.size() != u_.size()) {
    throw std::invalid_argument("apply_inverse: dimension mismatch");
  }
  if (identity_) return v;
  Vector out = (alpha_ * tau_) * v;
  if (active_) out.noalias() += u_.dot(v) * u_;
  return out;
}

Metric::Splitting Metric::splitting() const {
  Splitting out;
  if (identity_) {
    out.diag = Vector::Ones(u_.size());
    out.rank1 = Vector::Zero(u_.size());
    return out;
  }
  const double at = alpha_ * tau_;
  out.diag = Vector::Constant(u_.size(), 1.0 / at);
  if (active_) {
    out.rank1 = u_ / std::sqrt(at * (at + u_.squaredNorm()));
  } else {
    out.rank1 = Vector::Zero(u_.size());
  }
  return out;
}

Matrix Metric::dense_inverse() const {
  const auto d = u_.size();
  if (identity_) return Matrix::Identity(d, d);
  Matrix h = u_ * u_.transpose();
  h.diagonal().array() += alpha_ * tau_;
  return h;
}

Matrix Metric::dense() const {
  const Splitting sp = splitting();
  Matrix h = -(sp.rank1 * sp.rank1.transpose());
  h.diagonal() += sp.diag;
  return h;
}

ScaledProxProblem make_prox_problem(const Metric& metric, double eta, Vector point) {
  Metric::Splitting sp = metric.splitting();
  ScaledProxProblem prob;
  prob.diag = std::move(sp.diag);
  prob.rank1 = std::move(sp.rank1);
  prob.sign = sp.sign;
  prob.eta = eta;
  prob.x = std::move(point);
  return prob;
}

MetricBounds theorem1_bounds(const BatchHessianSpectrum& spectrum, double alpha,
                             std::size_t d) {
  const double lo = spectrum.lambda_lo;
  const double hi = spectrum.lambda_hi;
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("theorem1_bounds: alpha must lie in (0, 1)");
  }
  if (!(lo > 0.0 && lo <= hi) || !std::isfinite(hi)) {
    throw std::invalid_argument("theorem1_bounds: need 0 < lambda <= Lambda");
  }
  if (d == 0) throw std::invalid_argument("theorem1_bounds: d must be >= 1");

  const double dd = static_cast<double>(d);
  MetricBounds out;
  out.gamma_hi = dd * hi / alpha;

  // numerator = lambda^{d-1} * bracket
  const double bracket = alpha * (alpha - 2.0) * lo * lo + alpha * (1.0 - alpha) * lo * hi + hi * hi;
  if (d > 30) {
    out.log_gamma_lo = std::log(bracket) + (dd - 1.0) * std::log(lo) -
                       (dd - 1.0) * std::log(dd) - dd * std::log(hi) -
                       2.0 * std::log(lo) - std::log(1.0 - alpha);
    out.gamma_lo = std::exp(out.log_gamma_lo);
  } else {
    const double num = alpha * (alpha - 2.0) * std::pow(lo, dd + 1.0) +
                       alpha * (1.0 - alpha) * std::pow(lo, dd) * hi +
                       hi * hi * std::pow(lo, dd - 1.0);
    const double den =
        std::pow(dd, dd - 1.0) * std::pow(hi, dd) * lo * lo * (1.0 - alpha);
    out.gamma_lo = num / den;
    out.log_gamma_lo = std::log(out.gamma_lo);
  }
  out.degenerate = !(out.gamma_lo > 0.0) || !std::isfinite(out.gamma_lo);
  return out;
}

MetricBounds observed_bounds(const Metric& metric) {
  MetricBounds out;
  if (metric.is_identity()) {
    out.gamma_lo = out.gamma_hi = 1.0;
  } else {
    const double at = metric.alpha() * metric.tau();
    out.gamma_hi = 1.0 / at;
    out.gamma_lo = metric.rank_one_active() ? 1.0 / (at + metric.u().squaredNorm()) : out.gamma_hi;
    if (metric.dim() == 1) out.gamma_hi = out.gamma_lo;
  }
  out.log_gamma_lo = std::log(out.gamma_lo);
  return out;
}

}  // namespace psqn
