#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace psqn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexSpan = std::span<const std::size_t>;

/// One stored nonzero of a sparse row.
struct SparseEntry {
  std::size_t index;
  double value;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Read-only view of a row in compressed form.
struct RowView {
  std::span<const std::size_t> indices;
  std::span<const double> values;

  std::size_t size() const { return indices.size(); }
  double dot(const Vector& x) const;
  double squared_norm() const;
  /// out += scale * row
  void axpy(double scale, Vector& out) const;
};

/// Feature rows a_i (CSR storage) with responses b_i.
///
/// Indices are 0-based, strictly increasing within each row and below d().
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t dim, std::vector<std::size_t> row_ptr,
          std::vector<std::size_t> indices, std::vector<double> values,
          std::vector<double> labels);

  static Dataset from_rows(std::size_t dim,
                           const std::vector<std::vector<SparseEntry>>& rows,
                           std::vector<double> labels);
  static Dataset from_dense(const Matrix& features, const Vector& labels);

  std::size_t n() const { return labels_.size(); }
  std::size_t d() const { return dim_; }
  std::size_t nnz() const { return values_.size(); }

  RowView row(std::size_t i) const;
  double label(std::size_t i) const { return labels_.at(i); }
  std::span<const double> labels() const { return labels_; }

  /// Copy with every label replaced by -1 (label <= 0) or +1.
  Dataset with_binary_labels() const;

  Matrix to_dense() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> indices_;
  std::vector<double> values_;
  std::vector<double> labels_;
};

enum class Loss { SquaredError, LogisticRidge };

const char* to_string(Loss loss);

/// Extreme eigenvalues of a batch Hessian. `degenerate` is set when the
/// batch Hessian is singular (possible only with ridge = 0); lambda_lo is
/// then reported as 0.
struct BatchHessianSpectrum {
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;
  bool degenerate = false;
};

/// F(x) = (1/n) sum_i f_i(x), with
///   squared:  f_i(x) = 1/2 (a_i'x - b_i)^2        + ridge/2 ||x||^2
///   logistic: f_i(x) = log(1 + exp(-b_i a_i'x))   + ridge/2 ||x||^2
///
/// Component Lipschitz constants use the closed forms ||a_i||^2 + ridge and
/// ||a_i||^2/4 + ridge unless overridden. The strong convexity constant is the
/// conservative mu = ridge.
class SmoothObjective {
 public:
  SmoothObjective(Dataset data, Loss loss, double ridge);
  SmoothObjective(Dataset data, Loss loss, double ridge,
                  std::vector<double> lipschitz_override);

  const Dataset& data() const { return data_; }
  std::size_t n() const { return data_.n(); }
  std::size_t d() const { return data_.d(); }
  Loss loss() const { return loss_; }
  double ridge() const { return ridge_; }

  double lipschitz(std::size_t i) const { return lipschitz_.at(i); }
  std::span<const double> lipschitz() const { return lipschitz_; }
  /// L_Q = (1/n) sum_i L_i
  double lipschitz_mean() const { return lipschitz_mean_; }
  double lipschitz_max() const { return lipschitz_max_; }
  double strong_convexity() const { return ridge_; }

  double component_value(std::size_t i, const Vector& x) const;
  /// F(x)
  double value(const Vector& x) const;

  Vector component_gradient(std::size_t i, const Vector& x) const;
  /// out += scale * grad f_i(x). The hot path of every stochastic solver.
  void add_component_gradient(std::size_t i, const Vector& x, double scale,
                              Vector& out) const;
  /// sum_{i in S} grad f_i(x)  (a sum, not an average)
  Vector batch_gradient(IndexSpan batch, const Vector& x) const;
  /// (1/n) sum_i grad f_i(x)
  Vector full_gradient(const Vector& x) const;

  /// (sum_{i in T} hess f_i(x)) s, without forming the d x d matrix.
  Vector hessian_vec(IndexSpan batch, const Vector& x, const Vector& s) const;
  /// Dense sum_{i in T} hess f_i(x).
  Matrix batch_hessian(IndexSpan batch, const Vector& x) const;
  /// Dense hess F(x).
  Matrix full_hessian(const Vector& x) const;

  BatchHessianSpectrum batch_spectrum(IndexSpan batch, const Vector& x,
                                      std::size_t dense_limit = 256) const;

 private:
  void check_index(std::size_t i) const;
  void check_dim(const Vector& x) const;
  /// d/dz of the loss at z = a_i'x.
  double loss_slope(std::size_t i, double z) const;
  /// d^2/dz^2 of the loss at z = a_i'x.
  double loss_curvature(std::size_t i, double z) const;

  Dataset data_;
  Loss loss_;
  double ridge_;
  std::vector<double> lipschitz_;
  double lipschitz_mean_ = 0.0;
  double lipschitz_max_ = 0.0;
};

std::vector<std::size_t> all_indices(std::size_t n);

}  // namespace psqn
