#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "psqn/model.hpp"

namespace psqn {

enum class SamplingKind { UniformBatch, WeightedSingle, WeightedReplacement };

const char* to_string(SamplingKind kind);

struct SamplingScheme {
  SamplingKind kind = SamplingKind::UniformBatch;
  std::size_t batch = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const SamplingScheme&, const SamplingScheme&) = default;
};

/// 64-bit generator owned by a single solver run. Every draw consumes a fixed
/// number of engine words, so traces depend only on the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Integer in [0, bound) by multiply-shift; one word per call.
  std::size_t below(std::size_t bound);
  /// Double in [0, 1) with 53 random bits; one word per call.
  double unit();

 private:
  std::mt19937_64 engine_;
};

/// k distinct indices from [0, n), sorted. Floyd's algorithm: exactly k words.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

/// A drawn mini-batch. The estimator is
///   v = sum_t coefficients[t] (grad f_{i_t}(x) - grad f_{i_t}(x~)) + grad F(x~).
/// For set-probability schemes every coefficient equals 1 / weight with
/// weight = M b q_S; with-replacement draws carry per-index coefficients.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<double> coefficients;
  /// M b q_S; 0 for WeightedReplacement where no single set weight exists.
  double weight = 0.0;
  bool covers_all = false;
};

/// Anchor point of the variance-reduced estimator.
struct SnapshotState {
  Vector x_tilde;
  Vector full_grad;

  static SnapshotState at(const SmoothObjective& obj, Vector x_tilde);
};

class BatchSampler {
 public:
  BatchSampler(const SmoothObjective& obj, SamplingScheme scheme);

  const SamplingScheme& scheme() const { return scheme_; }
  /// Lipschitz-proportional probabilities p_i = L_i / sum_j L_j.
  const std::vector<double>& probabilities() const { return probs_; }

  Batch draw(Rng& rng) const;

 private:
  std::size_t draw_weighted_index(Rng& rng) const;

  std::size_t n_;
  SamplingScheme scheme_;
  std::vector<double> probs_;
  std::vector<double> cumulative_;
};

/// Variance-reduced gradient for a given batch. Component gradient
/// evaluations are added to *grad_evals when non-null.
Vector vr_gradient(const SmoothObjective& obj, const SnapshotState& snapshot,
                   const Batch& batch, const Vector& x, std::size_t* grad_evals = nullptr);

/// Draw a batch and evaluate the estimator at x.
Vector vr_gradient(const SmoothObjective& obj, const SnapshotState& snapshot,
                   const BatchSampler& sampler, const Vector& x, Rng& rng,
                   std::size_t* grad_evals = nullptr);

/// Exact first and second moments of the estimator over its sampling law.
struct EstimatorStats {
  Vector mean;
  /// E ||v - grad F(x)||^2
  double variance = 0.0;
  std::size_t outcomes = 0;
};

/// Enumerates every outcome with its probability: all C(n, b) subsets for
/// UniformBatch, the n singletons for WeightedSingle, all n^b ordered tuples
/// for WeightedReplacement. Throws when the outcome count exceeds the guard.
EstimatorStats enumerate_estimator_stats(const SmoothObjective& obj,
                                         const SnapshotState& snapshot,
                                         const SamplingScheme& scheme, const Vector& x,
                                         std::size_t max_outcomes = 100000);

/// C(n, k), saturating at SIZE_MAX.
std::size_t binomial(std::size_t n, std::size_t k);

}  // namespace psqn
