#include "psqn/sampler.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace psqn {

const char* to_string(SamplingKind kind) {
  switch (kind) {
    case SamplingKind::UniformBatch: return "uniform";
    case SamplingKind::WeightedSingle: return "weighted_single";
    case SamplingKind::WeightedReplacement: return "weighted_replacement";
  }
  return "?";
}

std::size_t Rng::below(std::size_t bound) {
  if (bound == 0) throw std::invalid_argument("rng: bound must be > 0");
  const unsigned __int128 prod =
      static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(bound);
  return static_cast<std::size_t>(prod >> 64);
}

double Rng::unit() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  if (k > n) {
    throw std::invalid_argument("sampler: batch size " + std::to_string(k) +
                                " exceeds n = " + std::to_string(n));
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  if (k * 4 >= n) {
    std::vector<char> taken(n, 0);
    for (std::size_t j = n - k; j < n; ++j) {
      const std::size_t t = rng.below(j + 1);
      const std::size_t pick = taken[t] ? j : t;
      taken[pick] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) out.push_back(i);
    }
    return out;
  }
  std::unordered_set<std::size_t> taken;
  taken.reserve(2 * k);
  for (std::size_t j = n - k; j < n; ++j) {
    const std::size_t t = rng.below(j + 1);
    const std::size_t pick = taken.count(t) ? j : t;
    taken.insert(pick);
    out.push_back(pick);
  }
  std::sort(out.begin(), out.end());
  return out;
}

SnapshotState SnapshotState::at(const SmoothObjective& obj, Vector x_tilde) {
  SnapshotState s;
  s.full_grad = obj.full_gradient(x_tilde);
  s.x_tilde = std::move(x_tilde);
  return s;
}

BatchSampler::BatchSampler(const SmoothObjective& obj, SamplingScheme scheme)
    : n_(obj.n()), scheme_(scheme) {
  if (scheme_.batch == 0) throw std::invalid_argument("sampler: batch size must be >= 1");
  if (scheme_.kind == SamplingKind::UniformBatch && scheme_.batch > n_) {
    throw std::invalid_argument("sampler: batch size " + std::to_string(scheme_.batch) +
                                " exceeds n = " + std::to_string(n_));
  }
  if (scheme_.kind == SamplingKind::WeightedSingle && scheme_.batch != 1) {
    throw std::invalid_argument("sampler: weighted_single requires batch = 1");
  }
  const auto lip = obj.lipschitz();
  const double total = std::accumulate(lip.begin(), lip.end(), 0.0);
  probs_.resize(n_);
  cumulative_.resize(n_);
  double run = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    probs_[i] = lip[i] / total;
    run += lip[i];
    cumulative_[i] = run / total;
  }
  cumulative_.back() = 1.0;
}

std::size_t BatchSampler::draw_weighted_index(Rng& rng) const {
  const double u = rng.unit();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative_.begin()), n_ - 1);
}

Batch BatchSampler::draw(Rng& rng) const {
  Batch out;
  const std::size_t b = scheme_.batch;
  const double n = static_cast<double>(n_);
  switch (scheme_.kind) {
    case SamplingKind::UniformBatch: {
      out.indices = sample_without_replacement(rng, n_, b);
      out.weight = static_cast<double>(b);
      out.coefficients.assign(b, 1.0 / out.weight);
      out.covers_all = b == n_;
      break;
    }
    case SamplingKind::WeightedSingle: {
      const std::size_t i = draw_weighted_index(rng);
      out.indices = {i};
      out.weight = n * probs_[i];
      out.coefficients = {1.0 / out.weight};
      break;
    }
    case SamplingKind::WeightedReplacement: {
      out.indices.resize(b);
      out.coefficients.resize(b);
      for (std::size_t t = 0; t < b; ++t) {
        const std::size_t i = draw_weighted_index(rng);
        out.indices[t] = i;
        out.coefficients[t] = 1.0 / (static_cast<double>(b) * n * probs_[i]);
      }
      break;
    }
  }
  return out;
}

Vector vr_gradient(const SmoothObjective& obj, const SnapshotState& snapshot,
                   const Batch& batch, const Vector& x, std::size_t* grad_evals) {
  if (batch.covers_all) {
    // The correction terms cancel exactly; return the full gradient itself.
    if (grad_evals) *grad_evals += obj.n();
    return obj.full_gradient(x);
  }
  Vector v = snapshot.full_grad;
  for (std::size_t t = 0; t < batch.indices.size(); ++t) {
    obj.add_component_gradient(batch.indices[t], x, batch.coefficients[t], v);
    obj.add_component_gradient(batch.indices[t], snapshot.x_tilde, -batch.coefficients[t], v);
  }
  if (grad_evals) *grad_evals += 2 * batch.indices.size();
  return v;
}

Vector vr_gradient(const SmoothObjective& obj, const SnapshotState& snapshot,
                   const BatchSampler& sampler, const Vector& x, Rng& rng,
                   std::size_t* grad_evals) {
  return vr_gradient(obj, snapshot, sampler.draw(rng), x, grad_evals);
}

std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;
    if (acc > std::numeric_limits<std::size_t>::max()) {
      return std::numeric_limits<std::size_t>::max();
    }
  }
  return static_cast<std::size_t>(acc);
}

namespace {

std::size_t saturating_power(std::size_t base, std::size_t exp) {
  unsigned __int128 acc = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    acc *= base;
    if (acc > std::numeric_limits<std::size_t>::max()) {
      return std::numeric_limits<std::size_t>::max();
    }
  }
  return static_cast<std::size_t>(acc);
}

}  // namespace

EstimatorStats enumerate_estimator_stats(const SmoothObjective& obj,
                                         const SnapshotState& snapshot,
                                         const SamplingScheme& scheme, const Vector& x,
                                         std::size_t max_outcomes) {
  const std::size_t n = obj.n();
  const std::size_t b = scheme.batch;
  const BatchSampler sampler(obj, scheme);  // validates the scheme
  const auto& p = sampler.probabilities();

  std::size_t outcomes = 0;
  switch (scheme.kind) {
    case SamplingKind::UniformBatch: outcomes = binomial(n, b); break;
    case SamplingKind::WeightedSingle: outcomes = n; break;
    case SamplingKind::WeightedReplacement: outcomes = saturating_power(n, b); break;
  }
  if (outcomes > max_outcomes) {
    throw std::invalid_argument("enumerate_estimator_stats: " + std::to_string(outcomes) +
                                " outcomes exceed the guard of " +
                                std::to_string(max_outcomes));
  }

  // zeta_i = grad f_i(x) - grad f_i(x~)
  std::vector<Vector> zeta(n);
  for (std::size_t i = 0; i < n; ++i) {
    zeta[i] = obj.component_gradient(i, x) - obj.component_gradient(i, snapshot.x_tilde);
  }
  const Vector target = obj.full_gradient(x);

  EstimatorStats stats;
  stats.mean = Vector::Zero(x.size());
  stats.outcomes = outcomes;
  auto accumulate = [&](double prob, const Vector& v) {
    stats.mean.noalias() += prob * v;
    stats.variance += prob * (v - target).squaredNorm();
  };

  switch (scheme.kind) {
    case SamplingKind::UniformBatch: {
      const double prob = 1.0 / static_cast<double>(outcomes);
      std::vector<std::size_t> pick(b);
      std::iota(pick.begin(), pick.end(), std::size_t{0});
      while (true) {
        Vector v = snapshot.full_grad;
        for (std::size_t i : pick) v.noalias() += zeta[i] / static_cast<double>(b);
        accumulate(prob, v);
        // next combination in lexicographic order
        std::size_t pos = b;
        while (pos > 0 && pick[pos - 1] == n - b + pos - 1) --pos;
        if (pos == 0) break;
        ++pick[pos - 1];
        for (std::size_t j = pos; j < b; ++j) pick[j] = pick[j - 1] + 1;
      }
      break;
    }
    case SamplingKind::WeightedSingle: {
      for (std::size_t i = 0; i < n; ++i) {
        const Vector v = snapshot.full_grad + zeta[i] / (static_cast<double>(n) * p[i]);
        accumulate(p[i], v);
      }
      break;
    }
    case SamplingKind::WeightedReplacement: {
      std::vector<std::size_t> tuple(b, 0);
      while (true) {
        Vector v = snapshot.full_grad;
        double prob = 1.0;
        for (std::size_t i : tuple) {
          prob *= p[i];
          v.noalias() += zeta[i] / (static_cast<double>(b * n) * p[i]);
        }
        accumulate(prob, v);
        std::size_t pos = 0;
        while (pos < b && ++tuple[pos] == n) tuple[pos++] = 0;
        if (pos == b) break;
      }
      break;
    }
  }
  return stats;
}

}  // namespace psqn
