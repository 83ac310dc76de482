#pragma once

#include <cstddef>
#include <cstdint>

#include "psqn/model.hpp"

namespace psqn {

/// Random sparse regression/classification instance.
///
/// Each entry of a_i is present with probability `density` (every row keeps
/// at least one entry) and drawn from N(0, s_j^2), where the column scales
/// s_j fall geometrically from 1 to 1/sqrt(condition), so the feature
/// covariance has condition number `condition`. A planted x with
/// ceil(d/10) nonzero N(0,1) coordinates gives b_i = a_i'x + noise * N(0,1)
/// (squared loss) or the sign of that (logistic, zero maps to +1).
struct SyntheticSpec {
  std::size_t n = 100;
  std::size_t d = 10;
  double density = 1.0;
  double condition = 1.0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  Loss loss = Loss::SquaredError;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

void validate(const SyntheticSpec& spec);

struct SyntheticInstance {
  Dataset data;
  Vector planted;
};

SyntheticInstance generate_synthetic(const SyntheticSpec& spec);

}  // namespace psqn
