#include "psqn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace psqn {

double RowView::dot(const Vector& x) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    acc += values[k] * x[static_cast<Eigen::Index>(indices[k])];
  }
  return acc;
}

double RowView::squared_norm() const {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return acc;
}

void RowView::axpy(double scale, Vector& out) const {
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out[static_cast<Eigen::Index>(indices[k])] += scale * values[k];
  }
}

Dataset::Dataset(std::size_t dim, std::vector<std::size_t> row_ptr,
                 std::vector<std::size_t> indices, std::vector<double> values,
                 std::vector<double> labels)
    : dim_(dim),
      row_ptr_(std::move(row_ptr)),
      indices_(std::move(indices)),
      values_(std::move(values)),
      labels_(std::move(labels)) {
  if (dim_ == 0) throw std::invalid_argument("dataset: d must be >= 1");
  if (labels_.empty()) throw std::invalid_argument("dataset: n must be >= 1");
  if (row_ptr_.size() != labels_.size() + 1 || row_ptr_.front() != 0 ||
      row_ptr_.back() != indices_.size() || indices_.size() != values_.size()) {
    throw std::invalid_argument("dataset: inconsistent CSR arrays");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (row_ptr_[i] > row_ptr_[i + 1]) {
      throw std::invalid_argument("dataset: row pointers must be non-decreasing");
    }
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      if (indices_[k] >= dim_) {
        throw std::invalid_argument("dataset: row " + std::to_string(i) +
                                    " has feature index " +
                                    std::to_string(indices_[k]) + " >= d");
      }
      if (k > row_ptr_[i] && indices_[k] <= indices_[k - 1]) {
        throw std::invalid_argument("dataset: row " + std::to_string(i) +
                                    " indices not strictly increasing");
      }
      if (!std::isfinite(values_[k])) {
        throw std::invalid_argument("dataset: non-finite feature value");
      }
    }
    if (!std::isfinite(labels_[i])) {
      throw std::invalid_argument("dataset: non-finite label");
    }
  }
}

Dataset Dataset::from_rows(std::size_t dim,
                           const std::vector<std::vector<SparseEntry>>& rows,
                           std::vector<double> labels) {
  if (rows.size() != labels.size()) {
    throw std::invalid_argument("dataset: rows and labels differ in length");
  }
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> indices;
  std::vector<double> values;
  for (const auto& row : rows) {
    for (const auto& e : row) {
      indices.push_back(e.index);
      values.push_back(e.value);
    }
    row_ptr.push_back(indices.size());
  }
  return Dataset(dim, std::move(row_ptr), std::move(indices), std::move(values),
                 std::move(labels));
}

Dataset Dataset::from_dense(const Matrix& features, const Vector& labels) {
  std::vector<std::vector<SparseEntry>> rows(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      if (features(i, j) != 0.0) {
        rows[static_cast<std::size_t>(i)].push_back(
            {static_cast<std::size_t>(j), features(i, j)});
      }
    }
  }
  return from_rows(static_cast<std::size_t>(features.cols()), rows,
                   std::vector<double>(labels.data(), labels.data() + labels.size()));
}

RowView Dataset::row(std::size_t i) const {
  if (i >= n()) throw std::out_of_range("dataset: row index out of range");
  const std::size_t begin = row_ptr_[i];
  const std::size_t len = row_ptr_[i + 1] - begin;
  return {std::span<const std::size_t>(indices_).subspan(begin, len),
          std::span<const double>(values_).subspan(begin, len)};
}

Dataset Dataset::with_binary_labels() const {
  Dataset out = *this;
  for (double& b : out.labels_) b = b <= 0.0 ? -1.0 : 1.0;
  return out;
}

Matrix Dataset::to_dense() const {
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(d()));
  for (std::size_t i = 0; i < n(); ++i) {
    const RowView r = row(i);
    for (std::size_t k = 0; k < r.size(); ++k) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r.indices[k])) = r.values[k];
    }
  }
  return a;
}

const char* to_string(Loss loss) {
  switch (loss) {
    case Loss::SquaredError: return "squared";
    case Loss::LogisticRidge: return "logistic";
  }
  return "?";
}

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(-t)) without overflow.
double log1pexp_neg(double t) {
  if (t > 0.0) return std::log1p(std::exp(-t));
  return -t + std::log1p(std::exp(t));
}

}  // namespace

SmoothObjective::SmoothObjective(Dataset data, Loss loss, double ridge)
    : SmoothObjective(std::move(data), loss, ridge, {}) {}

SmoothObjective::SmoothObjective(Dataset data, Loss loss, double ridge,
                                 std::vector<double> lipschitz_override)
    : data_(std::move(data)), loss_(loss), ridge_(ridge) {
  if (!(ridge_ >= 0.0) || !std::isfinite(ridge_)) {
    throw std::invalid_argument("objective: ridge must be finite and >= 0");
  }
  if (data_.n() == 0) throw std::invalid_argument("objective: empty dataset");
  if (loss_ == Loss::LogisticRidge) {
    for (double b : data_.labels()) {
      if (b != 1.0 && b != -1.0) {
        throw std::invalid_argument("objective: logistic loss needs labels in {-1, +1}");
      }
    }
  }
  if (!lipschitz_override.empty()) {
    if (lipschitz_override.size() != data_.n()) {
      throw std::invalid_argument("objective: Lipschitz override has wrong length");
    }
    lipschitz_ = std::move(lipschitz_override);
  } else {
    const double scale = loss_ == Loss::SquaredError ? 1.0 : 0.25;
    lipschitz_.resize(data_.n());
    for (std::size_t i = 0; i < data_.n(); ++i) {
      lipschitz_[i] = scale * data_.row(i).squared_norm() + ridge_;
    }
  }
  for (std::size_t i = 0; i < lipschitz_.size(); ++i) {
    if (!(lipschitz_[i] > 0.0) || !std::isfinite(lipschitz_[i])) {
      throw std::invalid_argument("objective: component " + std::to_string(i) +
                                  " has non-positive Lipschitz constant "
                                  "(empty row with ridge = 0?)");
    }
    if (lipschitz_[i] < ridge_) {
      throw std::invalid_argument("objective: Lipschitz constant below ridge");
    }
  }
  lipschitz_mean_ =
      std::accumulate(lipschitz_.begin(), lipschitz_.end(), 0.0) /
      static_cast<double>(lipschitz_.size());
  lipschitz_max_ = *std::max_element(lipschitz_.begin(), lipschitz_.end());
}

void SmoothObjective::check_index(std::size_t i) const {
  if (i >= n()) {
    throw std::out_of_range("objective: component index " + std::to_string(i) +
                            " out of range (n = " + std::to_string(n()) + ")");
  }
}

void SmoothObjective::check_dim(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != d()) {
    throw std::invalid_argument("objective: dimension mismatch (got " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(d()) + ")");
  }
}

double SmoothObjective::loss_slope(std::size_t i, double z) const {
  const double b = data_.label(i);
  if (loss_ == Loss::SquaredError) return z - b;
  return -b * sigmoid(-b * z);
}

double SmoothObjective::loss_curvature(std::size_t i, double z) const {
  if (loss_ == Loss::SquaredError) return 1.0;
  const double p = sigmoid(data_.label(i) * z);
  return p * (1.0 - p);
}

double SmoothObjective::component_value(std::size_t i, const Vector& x) const {
  check_index(i);
  check_dim(x);
  const double z = data_.row(i).dot(x);
  const double b = data_.label(i);
  const double reg = 0.5 * ridge_ * x.squaredNorm();
  if (loss_ == Loss::SquaredError) return 0.5 * (z - b) * (z - b) + reg;
  return log1pexp_neg(b * z) + reg;
}

double SmoothObjective::value(const Vector& x) const {
  check_dim(x);
  const double b_reg = 0.5 * ridge_ * x.squaredNorm();
  double acc = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    const double z = data_.row(i).dot(x);
    const double b = data_.label(i);
    acc += loss_ == Loss::SquaredError ? 0.5 * (z - b) * (z - b) : log1pexp_neg(b * z);
  }
  return acc / static_cast<double>(n()) + b_reg;
}

void SmoothObjective::add_component_gradient(std::size_t i, const Vector& x,
                                             double scale, Vector& out) const {
  const RowView r = data_.row(i);
  r.axpy(scale * loss_slope(i, r.dot(x)), out);
  if (ridge_ != 0.0) out.noalias() += (scale * ridge_) * x;
}

Vector SmoothObjective::component_gradient(std::size_t i, const Vector& x) const {
  check_index(i);
  check_dim(x);
  Vector g = Vector::Zero(x.size());
  add_component_gradient(i, x, 1.0, g);
  return g;
}

Vector SmoothObjective::batch_gradient(IndexSpan batch, const Vector& x) const {
  if (batch.empty()) throw std::invalid_argument("objective: empty batch");
  check_dim(x);
  Vector g = Vector::Zero(x.size());
  for (std::size_t i : batch) {
    check_index(i);
    const RowView r = data_.row(i);
    r.axpy(loss_slope(i, r.dot(x)), g);
  }
  if (ridge_ != 0.0) g.noalias() += (ridge_ * static_cast<double>(batch.size())) * x;
  return g;
}

Vector SmoothObjective::full_gradient(const Vector& x) const {
  check_dim(x);
  Vector g = Vector::Zero(x.size());
  for (std::size_t i = 0; i < n(); ++i) {
    const RowView r = data_.row(i);
    r.axpy(loss_slope(i, r.dot(x)), g);
  }
  g /= static_cast<double>(n());
  if (ridge_ != 0.0) g.noalias() += ridge_ * x;
  return g;
}

Vector SmoothObjective::hessian_vec(IndexSpan batch, const Vector& x,
                                    const Vector& s) const {
  if (batch.empty()) throw std::invalid_argument("objective: empty batch");
  check_dim(x);
  check_dim(s);
  Vector out = Vector::Zero(x.size());
  for (std::size_t i : batch) {
    check_index(i);
    const RowView r = data_.row(i);
    const double w = loss_curvature(i, r.dot(x));
    r.axpy(w * r.dot(s), out);
  }
  if (ridge_ != 0.0) out.noalias() += (ridge_ * static_cast<double>(batch.size())) * s;
  return out;
}

Matrix SmoothObjective::batch_hessian(IndexSpan batch, const Vector& x) const {
  if (batch.empty()) throw std::invalid_argument("objective: empty batch");
  check_dim(x);
  const auto dim = static_cast<Eigen::Index>(d());
  Matrix h = Matrix::Zero(dim, dim);
  for (std::size_t i : batch) {
    check_index(i);
    const RowView r = data_.row(i);
    const double w = loss_curvature(i, r.dot(x));
    for (std::size_t p = 0; p < r.size(); ++p) {
      for (std::size_t q = 0; q < r.size(); ++q) {
        h(static_cast<Eigen::Index>(r.indices[p]), static_cast<Eigen::Index>(r.indices[q])) +=
            w * r.values[p] * r.values[q];
      }
    }
  }
  h.diagonal().array() += ridge_ * static_cast<double>(batch.size());
  return h;
}

Matrix SmoothObjective::full_hessian(const Vector& x) const {
  const std::vector<std::size_t> all = all_indices(n());
  Matrix h = batch_hessian(all, x);
  h /= static_cast<double>(n());
  return h;
}

BatchHessianSpectrum SmoothObjective::batch_spectrum(IndexSpan batch, const Vector& x,
                                                     std::size_t dense_limit) const {
  if (d() > dense_limit) {
    throw std::invalid_argument("batch_spectrum: d = " + std::to_string(d()) +
                                " exceeds dense limit " + std::to_string(dense_limit));
  }
  const Matrix h = batch_hessian(batch, x);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("batch_spectrum: eigen decomposition failed");
  }
  BatchHessianSpectrum out;
  out.lambda_hi = eig.eigenvalues().maxCoeff();
  out.lambda_lo = eig.eigenvalues().minCoeff();
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::abs(out.lambda_hi)) * static_cast<double>(d());
  if (out.lambda_lo <= floor) {
    out.lambda_lo = 0.0;
    out.degenerate = true;
  }
  return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace psqn
