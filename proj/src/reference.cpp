#include <cmath>
#include <stdexcept>
#include <string>

#include "psqn/solver.hpp"

namespace psqn {

ReferenceSolution reference_solution(const SmoothObjective& obj, const Regularizer& reg,
                                     double tol, std::size_t max_iterations) {
  if (!(tol > 0.0)) throw std::invalid_argument("reference_solution: tol must be > 0");
  const double lipschitz = obj.lipschitz_mean();
  const double step = 1.0 / lipschitz;
  const auto d = static_cast<Eigen::Index>(obj.d());

  auto mapping_norm = [&](const Vector& x) {
    const Vector next = prox(reg, x - step * obj.full_gradient(x), step);
    return lipschitz * (x - next).norm();
  };

  Vector x = Vector::Zero(d);
  Vector y = x;
  double t = 1.0;
  ReferenceSolution out;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const Vector next = prox(reg, y - step * obj.full_gradient(y), step);
    // ||G(y)||; small values trigger the exact check at the new point.
    const double at_y = lipschitz * (y - next).norm();
    // Gradient-based restart keeps the momentum from overshooting.
    if ((y - next).dot(next - x) > 0.0) {
      t = 1.0;
      y = next;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = next + ((t - 1.0) / t_next) * (next - x);
      t = t_next;
    }
    x = next;
    if (at_y <= tol) {
      const double res = mapping_norm(x);
      if (res <= tol) {
        out.x = x;
        out.objective = obj.value(x) + reg.value(x);
        out.residual = res;
        out.iterations = it;
        return out;
      }
    }
  }
  throw std::runtime_error("reference_solution: residual above " + std::to_string(tol) +
                           " after " + std::to_string(max_iterations) + " iterations");
}

}  // namespace psqn
