#include "psqn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "psqn/sampler.hpp"

namespace psqn {

void validate(const SyntheticSpec& spec) {
  if (spec.n == 0 || spec.d == 0) throw std::invalid_argument("synthetic: n and d must be >= 1");
  if (!(spec.density > 0.0 && spec.density <= 1.0)) {
    throw std::invalid_argument("synthetic: density must lie in (0, 1]");
  }
  if (spec.density * static_cast<double>(spec.d) < 1.0) {
    throw std::invalid_argument("synthetic: density * d must be >= 1");
  }
  if (!(spec.condition >= 1.0) || !std::isfinite(spec.condition)) {
    throw std::invalid_argument("synthetic: condition target must be >= 1");
  }
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) {
    throw std::invalid_argument("synthetic: noise must be finite and >= 0");
  }
}

SyntheticInstance generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 engine(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Rng picks(spec.seed ^ 0xd1b54a32d192ed03ULL);

  const std::size_t d = spec.d;
  std::vector<double> scale(d, 1.0);
  if (d > 1) {
    for (std::size_t j = 0; j < d; ++j) {
      const double frac = static_cast<double>(j) / static_cast<double>(d - 1);
      scale[j] = std::pow(spec.condition, -0.5 * frac);
    }
  }

  Vector planted = Vector::Zero(static_cast<Eigen::Index>(d));
  const std::size_t support = (d + 9) / 10;
  for (std::size_t j : sample_without_replacement(picks, d, support)) {
    planted[static_cast<Eigen::Index>(j)] = normal(engine);
  }

  std::vector<std::vector<SparseEntry>> rows(spec.n);
  std::vector<double> labels(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto& row = rows[i];
    for (std::size_t j = 0; j < d; ++j) {
      if (spec.density >= 1.0 || picks.unit() < spec.density) {
        row.push_back({j, scale[j] * normal(engine)});
      }
    }
    if (row.empty()) {
      const std::size_t j = picks.below(d);
      row.push_back({j, scale[j] * normal(engine)});
    }
    double z = 0.0;
    for (const auto& e : row) z += e.value * planted[static_cast<Eigen::Index>(e.index)];
    if (spec.noise > 0.0) z += spec.noise * normal(engine);
    labels[i] = spec.loss == Loss::SquaredError ? z : (z >= 0.0 ? 1.0 : -1.0);
  }
  return {Dataset::from_rows(d, rows, std::move(labels)), std::move(planted)};
}

}  // namespace psqn
